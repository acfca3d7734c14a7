#include "crowdmetric/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace crowdmetric {

namespace {

using Index = Eigen::Index;

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ls(line);
  while (std::getline(ls, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool data_line(std::istream& is, std::string& line) {
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") != std::string::npos) return true;
  }
  return false;
}

double to_double(const std::string& s, std::size_t lineno) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw std::invalid_argument("line " + std::to_string(lineno) + ": bad number '" + s + "'");
  }
  return v;
}

long long to_int(const std::string& s, std::size_t lineno) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::invalid_argument("line " + std::to_string(lineno) + ": bad integer '" + s + "'");
  }
  return v;
}

// Lower tail of the standard normal: log Phi(x) for x << 0.
double log_ndtr_tail(double x) {
  const double z = x * x;
  const double series = 1.0 - 1.0 / z + 3.0 / (z * z) - 15.0 / (z * z * z);
  return -0.5 * z - std::log(-x) - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(series);
}

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

void pair_uniform(std::size_t n, Rng& rng, std::size_t& i, std::size_t& j) {
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  std::uniform_int_distribution<std::size_t> second(0, n - 2);
  const std::size_t p = first(rng);
  std::size_t q = second(rng);
  if (q >= p) ++q;
  i = std::min(p, q);
  j = std::max(p, q);
}

int draw_label(const CrowdModel& model, const LinkFunction& link, std::size_t i, std::size_t j, std::size_t k,
               Rng& rng) {
  const double dv = delta(model.M_star, model.V_star.col(static_cast<Index>(k)), model.X.col(static_cast<Index>(i)),
                          model.X.col(static_cast<Index>(j)));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  return unif(rng) < response_prob(link, dv) ? -1 : 1;
}

}  // namespace

CrowdModel make_model(MatrixXd X, SymMatrix M, MatrixXd U) {
  if (M.dim() != static_cast<std::size_t>(X.rows()) || U.rows() != X.rows()) {
    throw std::invalid_argument("make_model: dimension mismatch between items, metric and users");
  }
  MatrixXd V = -2.0 * M.matrix() * U;
  return CrowdModel{std::move(X), std::move(M), std::move(U), std::move(V)};
}

LinkFunction LinkFunction::logistic(double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw std::invalid_argument("logistic link needs beta > 0");
  return LinkFunction(Kind::logistic, beta);
}

LinkFunction LinkFunction::probit() { return LinkFunction(Kind::probit, 1.0); }

double LinkFunction::f(double x) const {
  if (kind_ == Kind::logistic) {
    const double t = beta_ * x;
    if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
  }
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double LinkFunction::derivative(double x) const {
  if (kind_ == Kind::logistic) {
    const double t = beta_ * std::abs(x);
    const double e = std::exp(-t);
    return beta_ * e / ((1.0 + e) * (1.0 + e));
  }
  return normal_pdf(x);
}

double LinkFunction::log_f(double x) const {
  if (kind_ == Kind::logistic) {
    const double t = beta_ * x;
    // -softplus(-t)
    return t >= 0 ? -std::log1p(std::exp(-t)) : t - std::log1p(std::exp(t));
  }
  if (x < -30.0) return log_ndtr_tail(x);
  return std::log(f(x));
}

double LinkFunction::neg_log_derivative(double x) const {
  if (kind_ == Kind::logistic) {
    // -beta * (1 - sigma(beta x)) = -beta * sigma(-beta x)
    const double t = -beta_ * x;
    const double s = t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
    return -beta_ * s;
  }
  return -std::exp(-0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi) - log_f(x));
}

void ResponseDataset::validate() const {
  for (const auto& r : records) {
    if (r.i >= n || r.j >= n) throw std::invalid_argument("record item index out of range");
    if (r.i == r.j) throw std::invalid_argument("record compares an item with itself");
    if (r.k >= K) throw std::invalid_argument("record user index out of range");
    if (r.y != 1 && r.y != -1) throw std::invalid_argument("record label must be -1 or +1");
  }
}

std::vector<std::size_t> ResponseDataset::counts_per_user() const {
  std::vector<std::size_t> c(K, 0);
  for (const auto& r : records) ++c.at(r.k);
  return c;
}

ResponseDataset ResponseDataset::for_user(std::size_t k) const {
  ResponseDataset out{n, K, d, {}};
  for (const auto& r : records) {
    if (r.k == k) out.records.push_back(r);
  }
  return out;
}

MatrixXd gen_items_gaussian(std::size_t n, std::size_t d, Rng& rng) {
  if (n < 1 || d < 1) throw std::invalid_argument("gen_items_gaussian needs n, d >= 1");
  std::normal_distribution<double> g(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
  MatrixXd X(static_cast<Index>(d), static_cast<Index>(n));
  for (Index c = 0; c < X.cols(); ++c) {
    for (Index r = 0; r < X.rows(); ++r) X(r, c) = g(rng);
  }
  return X;
}

MatrixXd gen_users_gaussian(std::size_t K, std::size_t d, Rng& rng) { return gen_items_gaussian(K, d, rng); }

SymMatrix gen_metric(std::size_t d, std::size_t r, Rng& rng, MetricMode mode) {
  if (d < 1 || r < 1 || r > d) throw std::invalid_argument("gen_metric needs 1 <= r <= d");
  std::normal_distribution<double> g(0.0, 1.0);
  MatrixXd G(static_cast<Index>(d), static_cast<Index>(r));
  for (Index c = 0; c < G.cols(); ++c) {
    for (Index i = 0; i < G.rows(); ++i) G(i, c) = g(rng);
  }
  const double dd = static_cast<double>(d);
  if (mode == MetricMode::low_rank) {
    Eigen::HouseholderQR<MatrixXd> qr(G);
    const MatrixXd L = qr.householderQ() * MatrixXd::Identity(G.rows(), G.cols());
    return SymMatrix::symmetrized((dd / std::sqrt(static_cast<double>(r))) * L * L.transpose());
  }
  MatrixXd M = G * G.transpose();
  M *= dd / M.norm();
  return SymMatrix::symmetrized(M);
}

double delta(const SymMatrix& M, const VectorXd& v, const VectorXd& xi, const VectorXd& xj) {
  const auto d = static_cast<Index>(M.dim());
  if (v.size() != d || xi.size() != d || xj.size() != d) throw std::invalid_argument("delta: dimension mismatch");
  const MatrixXd& m = M.matrix();
  return xi.dot(m * xi) - xj.dot(m * xj) + v.dot(xi - xj);
}

double delta_ideal(const SymMatrix& M, const VectorXd& u, const VectorXd& xi, const VectorXd& xj) {
  const auto d = static_cast<Index>(M.dim());
  if (u.size() != d || xi.size() != d || xj.size() != d) throw std::invalid_argument("delta: dimension mismatch");
  const VectorXd a = xi - u;
  const VectorXd b = xj - u;
  return a.dot(M.matrix() * a) - b.dot(M.matrix() * b);
}

double response_prob(const LinkFunction& link, double delta_value) { return link.f(-delta_value); }

ResponseDataset sample_dataset(const CrowdModel& model, const LinkFunction& link, std::size_t size, Rng& rng) {
  ResponseDataset out{model.n(), model.K(), model.d(), {}};
  if (model.n() < 2 || model.K() < 1) throw std::invalid_argument("sample_dataset needs n >= 2 and K >= 1");
  std::uniform_int_distribution<std::size_t> user(0, model.K() - 1);
  out.records.reserve(size);
  for (std::size_t t = 0; t < size; ++t) {
    Record r;
    pair_uniform(model.n(), rng, r.i, r.j);
    r.k = user(rng);
    r.y = draw_label(model, link, r.i, r.j, r.k, rng);
    out.records.push_back(r);
  }
  return out;
}

ResponseDataset sample_user_pools(const CrowdModel& model, const LinkFunction& link, std::size_t count, Rng& rng) {
  ResponseDataset out{model.n(), model.K(), model.d(), {}};
  if (model.n() < 2) throw std::invalid_argument("sample_user_pools needs n >= 2");
  out.records.reserve(count * model.K());
  for (std::size_t k = 0; k < model.K(); ++k) {
    for (std::size_t t = 0; t < count; ++t) {
      Record r;
      r.k = k;
      pair_uniform(model.n(), rng, r.i, r.j);
      r.y = draw_label(model, link, r.i, r.j, k, rng);
      out.records.push_back(r);
    }
  }
  return out;
}

std::pair<ResponseDataset, ResponseDataset> split_blocked_by_user(const ResponseDataset& pools,
                                                                  std::size_t train_per_user, Rng& rng) {
  ResponseDataset train{pools.n, pools.K, pools.d, {}};
  ResponseDataset test{pools.n, pools.K, pools.d, {}};
  for (std::size_t k = 0; k < pools.K; ++k) {
    std::vector<Record> mine = pools.for_user(k).records;
    if (mine.size() < train_per_user) {
      throw std::invalid_argument("user " + std::to_string(k + 1) + " has " + std::to_string(mine.size()) +
                                  " records, fewer than the requested training size");
    }
    std::shuffle(mine.begin(), mine.end(), rng);
    const auto cut = mine.begin() + static_cast<std::ptrdiff_t>(train_per_user);
    train.records.insert(train.records.end(), mine.begin(), cut);
    test.records.insert(test.records.end(), cut, mine.end());
  }
  return {std::move(train), std::move(test)};
}

ResponseDataset take_per_user(const ResponseDataset& data, std::size_t count) {
  ResponseDataset out{data.n, data.K, data.d, {}};
  std::vector<std::size_t> taken(data.K, 0);
  for (const auto& r : data.records) {
    if (taken.at(r.k) < count) {
      out.records.push_back(r);
      ++taken[r.k];
    }
  }
  for (std::size_t k = 0; k < data.K; ++k) {
    if (taken[k] < count) throw std::invalid_argument("take_per_user: not enough records for every user");
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t trial, std::uint64_t tag) {
  // splitmix64 finalizer applied to each component in turn
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(master) ^ trial) ^ tag);
}

std::uint64_t hash_tag(const std::string& s) {
  // FNV-1a
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

MatrixXd read_items_csv(std::istream& is) {
  std::string line;
  if (!data_line(is, line)) throw std::invalid_argument("item CSV is empty");
  const auto header = split_csv(line);
  if (header.size() < 2 || header[0] != "item_id") {
    throw std::invalid_argument("item CSV header must be item_id,f1,...,fd");
  }
  const std::size_t d = header.size() - 1;
  for (std::size_t c = 1; c <= d; ++c) {
    if (header[c] != "f" + std::to_string(c)) throw std::invalid_argument("item CSV header column " + header[c]);
  }
  std::map<long long, VectorXd> items;
  std::size_t lineno = 1;
  while (data_line(is, line)) {
    ++lineno;
    const auto cells = split_csv(line);
    if (cells.size() != d + 1) {
      throw std::invalid_argument("line " + std::to_string(lineno) + ": expected " + std::to_string(d + 1) + " fields");
    }
    const long long id = to_int(cells[0], lineno);
    VectorXd x(static_cast<Index>(d));
    for (std::size_t c = 0; c < d; ++c) x(static_cast<Index>(c)) = to_double(cells[c + 1], lineno);
    if (!items.emplace(id, std::move(x)).second) {
      throw std::invalid_argument("line " + std::to_string(lineno) + ": duplicate item_id");
    }
  }
  if (items.empty()) throw std::invalid_argument("item CSV has no items");
  MatrixXd X(static_cast<Index>(d), static_cast<Index>(items.size()));
  long long expect = 1;
  for (const auto& [id, x] : items) {
    if (id != expect) throw std::invalid_argument("item ids must be exactly 1..n");
    X.col(static_cast<Index>(id - 1)) = x;
    ++expect;
  }
  return X;
}

void write_items_csv(std::ostream& os, const MatrixXd& X) {
  os << "item_id";
  for (Index c = 0; c < X.rows(); ++c) os << ",f" << c + 1;
  os << '\n';
  const auto old = os.precision(17);
  for (Index i = 0; i < X.cols(); ++i) {
    os << i + 1;
    for (Index c = 0; c < X.rows(); ++c) os << ',' << X(c, i);
    os << '\n';
  }
  os.precision(old);
}

ResponseDataset read_responses_csv(std::istream& is, std::size_t n, std::size_t d, std::size_t K) {
  std::string line;
  if (!data_line(is, line)) throw std::invalid_argument("response CSV is empty");
  const auto header = split_csv(line);
  if (header != std::vector<std::string>{"user_id", "item_i", "item_j", "y"}) {
    throw std::invalid_argument("response CSV header must be user_id,item_i,item_j,y");
  }
  ResponseDataset out{n, K, d, {}};
  std::size_t max_user = 0;
  std::size_t lineno = 1;
  while (data_line(is, line)) {
    ++lineno;
    const auto cells = split_csv(line);
    if (cells.size() != 4) throw std::invalid_argument("line " + std::to_string(lineno) + ": expected 4 fields");
    const long long u = to_int(cells[0], lineno);
    const long long i = to_int(cells[1], lineno);
    const long long j = to_int(cells[2], lineno);
    const long long y = to_int(cells[3], lineno);
    if (u < 1 || (K > 0 && static_cast<std::size_t>(u) > K)) {
      throw std::invalid_argument("line " + std::to_string(lineno) + ": user_id out of range");
    }
    if (i < 1 || j < 1 || static_cast<std::size_t>(i) > n || static_cast<std::size_t>(j) > n || i == j) {
      throw std::invalid_argument("line " + std::to_string(lineno) + ": bad item indices");
    }
    if (y != 1 && y != -1) throw std::invalid_argument("line " + std::to_string(lineno) + ": y must be -1 or 1");
    out.records.push_back(Record{static_cast<std::size_t>(i - 1), static_cast<std::size_t>(j - 1),
                                 static_cast<std::size_t>(u - 1), static_cast<int>(y)});
    max_user = std::max(max_user, static_cast<std::size_t>(u));
  }
  if (K == 0) out.K = max_user;
  return out;
}

void write_responses_csv(std::ostream& os, const ResponseDataset& data) {
  os << "user_id,item_i,item_j,y\n";
  for (const auto& r : data.records) os << r.k + 1 << ',' << r.i + 1 << ',' << r.j + 1 << ',' << r.y << '\n';
}

MatrixXd center_items(const MatrixXd& X) {
  const VectorXd mean = X.rowwise().mean();
  return X.colwise() - mean;
}

MatrixXd maxnorm_items(const MatrixXd& X) {
  const double m = X.colwise().norm().maxCoeff();
  if (!(m > 0.0)) throw std::invalid_argument("maxnorm: all items are zero");
  return X / m;
}

}  // namespace crowdmetric
