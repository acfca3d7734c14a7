#include "crowdmetric/selection.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace crowdmetric {

namespace {

using IntMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

void check_pair(const Pair& r, std::size_t n) {
  if (r.p == r.q) throw std::invalid_argument("selection row compares an item with itself");
  if (r.p >= n || r.q >= n) throw std::invalid_argument("selection row index out of range");
}

IntMatrix to_integer(const SelectionMatrix& s) {
  IntMatrix a = IntMatrix::Zero(static_cast<Eigen::Index>(s.m()), static_cast<Eigen::Index>(s.n()));
  for (std::size_t i = 0; i < s.m(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    a(r, static_cast<Eigen::Index>(s.row(i).p)) = 1;
    a(r, static_cast<Eigen::Index>(s.row(i).q)) = -1;
  }
  return a;
}

// Strips comments and surrounding whitespace; returns false at EOF.
bool next_line(std::istream& is, std::string& line) {
  while (std::getline(is, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    return true;
  }
  return false;
}

std::size_t parse_key(const std::string& token, const std::string& key) {
  const std::string prefix = key + "=";
  if (token.rfind(prefix, 0) != 0) {
    throw std::invalid_argument("expected '" + prefix + "<value>', got '" + token + "'");
  }
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(token.substr(prefix.size()), &pos);
    if (pos != token.size() - prefix.size()) throw std::invalid_argument(token);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw std::invalid_argument("bad integer in '" + token + "'");
  }
}

bool parse_row(const std::string& line, std::size_t n, Pair& out) {
  std::istringstream ls(line);
  long long p = 0;
  long long q = 0;
  std::string rest;
  if (!(ls >> p >> q)) return false;
  if (ls >> rest) throw std::invalid_argument("trailing text on row line: " + line);
  if (p < 1 || q < 1 || static_cast<std::size_t>(p) > n || static_cast<std::size_t>(q) > n) {
    throw std::invalid_argument("row index out of range: " + line);
  }
  out = Pair{static_cast<std::size_t>(p - 1), static_cast<std::size_t>(q - 1)};
  return true;
}

SelectionMatrix chain(std::size_t n, std::size_t first, std::size_t count) {
  std::vector<Pair> rows;
  for (std::size_t i = 0; i < count; ++i) rows.push_back({first + i, first + i + 1});
  return SelectionMatrix(n, std::move(rows));
}

// 1-based literal rows, as printed in the construction tables.
SelectionMatrix literal(std::size_t n, std::initializer_list<std::pair<int, int>> rows) {
  std::vector<Pair> out;
  for (const auto& [p, q] : rows) {
    out.push_back({static_cast<std::size_t>(p - 1), static_cast<std::size_t>(q - 1)});
  }
  return SelectionMatrix(n, std::move(out));
}

}  // namespace

SelectionMatrix::SelectionMatrix(std::size_t n, std::vector<Pair> rows) : n_(n), rows_(std::move(rows)) {
  if (n_ < 2) throw std::invalid_argument("selection matrix needs n >= 2");
  for (const auto& r : rows_) check_pair(r, n_);
}

void SelectionMatrix::append(Pair r) {
  check_pair(r, n_);
  rows_.push_back(r);
}

void SelectionMatrix::append(const SelectionMatrix& other) {
  if (other.n() != n_) throw std::invalid_argument("append: item counts differ");
  rows_.insert(rows_.end(), other.rows_.begin(), other.rows_.end());
}

SelectionMatrix SelectionMatrix::subset(const std::vector<std::size_t>& idx) const {
  std::vector<Pair> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(row(i));
  return SelectionMatrix(n_, std::move(out));
}

std::size_t UserScheme::total_rows() const {
  std::size_t t = 0;
  for (const auto& s : users) t += s.m();
  return t;
}

bool UserScheme::has_partition() const {
  if (split.size() != users.size() || users.empty()) return false;
  return std::all_of(split.begin(), split.end(), [](const auto& s) { return s.has_value(); });
}

SelectionMatrix UserScheme::first_block(std::size_t k) const {
  if (k >= split.size() || !split[k]) throw std::invalid_argument("user has no partition");
  std::vector<std::size_t> idx(*split[k]);
  std::iota(idx.begin(), idx.end(), 0);
  return users.at(k).subset(idx);
}

SelectionMatrix UserScheme::second_block(std::size_t k) const {
  if (k >= split.size() || !split[k]) throw std::invalid_argument("user has no partition");
  std::vector<std::size_t> idx;
  for (std::size_t i = *split[k]; i < users.at(k).m(); ++i) idx.push_back(i);
  return users.at(k).subset(idx);
}

SelectionMatrix UserScheme::stacked_second() const {
  SelectionMatrix out(n, {});
  for (std::size_t k = 0; k < K(); ++k) out.append(second_block(k));
  return out;
}

SelectionMatrix UserScheme::stacked() const {
  SelectionMatrix out(n, {});
  for (const auto& s : users) out.append(s);
  return out;
}

void UserScheme::validate() const {
  if (n < 2) throw std::invalid_argument("scheme needs n >= 2");
  if (!split.empty() && split.size() != users.size()) {
    throw std::invalid_argument("scheme partition list does not match user count");
  }
  for (std::size_t k = 0; k < users.size(); ++k) {
    if (users[k].n() != n) throw std::invalid_argument("user selection matrices must share n");
    if (k < split.size() && split[k] && *split[k] > users[k].m()) {
      throw std::invalid_argument("partition larger than the user's row count");
    }
  }
}

Eigen::MatrixXd to_dense(const SelectionMatrix& s) { return to_integer(s).cast<double>(); }

SelectionMatrix stack(const SelectionMatrix& a, const SelectionMatrix& b) {
  SelectionMatrix out = a;
  out.append(b);
  return out;
}

std::size_t exact_rank(const IntMatrix& input) {
  IntMatrix a = input;
  const Eigen::Index rows = a.rows();
  const Eigen::Index cols = a.cols();
  std::int64_t prev = 1;
  Eigen::Index rank = 0;
  for (Eigen::Index c = 0; c < cols && rank < rows; ++c) {
    Eigen::Index piv = rank;
    while (piv < rows && a(piv, c) == 0) ++piv;
    if (piv == rows) continue;
    a.row(piv).swap(a.row(rank));
    const std::int64_t pv = a(rank, c);
    for (Eigen::Index i = rank + 1; i < rows; ++i) {
      const std::int64_t f = a(i, c);
      for (Eigen::Index j = c + 1; j < cols; ++j) {
        // Bareiss step: the division is exact.
        a(i, j) = (pv * a(i, j) - f * a(rank, j)) / prev;
      }
      a(i, c) = 0;
    }
    prev = pv;
    ++rank;
  }
  return static_cast<std::size_t>(rank);
}

std::size_t selection_rank(const SelectionMatrix& s) {
  if (s.m() == 0) return 0;
  return exact_rank(to_integer(s));
}

bool is_incremental(const SelectionMatrix& s) {
  std::vector<bool> seen(s.n(), false);
  for (const auto& r : s.rows()) {
    if (seen[r.p] && seen[r.q]) return false;
    seen[r.p] = true;
    seen[r.q] = true;
  }
  return true;
}

std::optional<std::vector<std::size_t>> find_incremental_permutation(const SelectionMatrix& s) {
  const std::size_t m = s.m();
  std::vector<std::size_t> use(s.n(), 0);
  for (const auto& r : s.rows()) {
    ++use[r.p];
    ++use[r.q];
  }
  std::vector<bool> alive(m, true);
  std::vector<std::size_t> order(m);
  for (std::size_t slot = m; slot-- > 0;) {
    std::size_t pick = m;
    for (std::size_t i = 0; i < m; ++i) {
      if (alive[i] && (use[s.row(i).p] == 1 || use[s.row(i).q] == 1)) {
        pick = i;
        break;
      }
    }
    if (pick == m) return std::nullopt;
    alive[pick] = false;
    --use[s.row(pick).p];
    --use[s.row(pick).q];
    order[slot] = pick;
  }
  return order;
}

SelectionMatrix complete_selection(std::size_t n) {
  if (n < 2) throw std::invalid_argument("complete_selection needs n >= 2");
  std::vector<Pair> rows;
  rows.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) rows.push_back({i, j});
  }
  return SelectionMatrix(n, std::move(rows));
}

SelectionMatrix sample_uniform_pairs(std::size_t n, std::size_t m, Rng& rng) {
  if (n < 2) throw std::invalid_argument("sample_uniform_pairs needs n >= 2");
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  std::uniform_int_distribution<std::size_t> second(0, n - 2);
  std::vector<Pair> rows;
  rows.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t p = first(rng);
    std::size_t q = second(rng);
    if (q >= p) ++q;
    rows.push_back({p, q});
  }
  return SelectionMatrix(n, std::move(rows));
}

RandRankBound randrank_bound(std::size_t r0, std::size_t r, std::size_t n, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("randrank_bound: delta must lie in (0,1)");
  if (r0 > r) throw std::invalid_argument("randrank_bound: r0 must not exceed r");
  if (n < 2) throw std::invalid_argument("randrank_bound: n must be >= 2");
  const double total = static_cast<double>(n) * static_cast<double>(n - 1);
  double sum = 0.0;
  for (std::size_t i = r0 + 1; i <= r; ++i) {
    const double hit = static_cast<double>(i) * static_cast<double>(i - 1);
    if (hit >= total) throw std::invalid_argument("randrank_bound: rank target too large for n");
    sum += 1.0 / (1.0 - hit / total);
  }
  return {sum, (1.0 + std::log(1.0 / delta)) * sum};
}

RankSampling sample_until_rank(const SelectionMatrix& s0, std::size_t target_r, Rng& rng) {
  const std::size_t n = s0.n();
  const std::size_t r0 = selection_rank(s0);
  if (target_r < r0 || target_r > n - 1) {
    throw std::invalid_argument("sample_until_rank: target rank out of range");
  }
  RankSampling out{SelectionMatrix(n, {}), 0};
  if (target_r == r0) return out;

  const double bound = randrank_bound(r0, target_r, n, 0.5).expected;
  const auto cap = static_cast<std::size_t>(std::max(50.0, std::ceil(50.0 * bound)));
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  std::uniform_int_distribution<std::size_t> second(0, n - 2);
  SelectionMatrix current = s0;
  std::size_t rank = r0;
  while (rank < target_r) {
    if (out.count >= cap) throw std::runtime_error("sample_until_rank: iteration cap exceeded");
    const std::size_t p = first(rng);
    std::size_t q = second(rng);
    if (q >= p) ++q;
    current.append(Pair{p, q});
    out.appended.append(Pair{p, q});
    ++out.count;
    rank = selection_rank(current);
  }
  return out;
}

Rational newspan_probability(const SelectionMatrix& s) {
  const std::size_t n = s.n();
  if (n > 30) throw std::invalid_argument("newspan_probability: n must be <= 30");
  const std::size_t base = selection_rank(s);
  std::uint64_t hits = 0;
  std::uint64_t total = 0;
  SelectionMatrix probe = s;
  probe.append(Pair{0, 1});
  const std::size_t last = probe.m() - 1;
  std::vector<Pair> rows = probe.rows();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      rows[last] = Pair{i, j};
      ++total;
      if (selection_rank(SelectionMatrix(n, rows)) == base) ++hits;
    }
  }
  const std::uint64_t g = std::gcd(hits, total);
  if (hits == 0) return {0, 1};
  return {hits / g, total / g};
}

UserScheme minimal_multiuser_construction(std::size_t d, std::size_t K) {
  if (d < 1 || K < 1) throw std::invalid_argument("minimal construction needs d, K >= 1");
  const std::size_t D = d * (d + 1) / 2;
  if (D % K != 0) throw std::invalid_argument("minimal construction needs d(d+1)/2 divisible by K");
  const std::size_t n = D + d + 1;
  const std::size_t per = D / K;
  UserScheme scheme;
  scheme.n = n;
  for (std::size_t k = 0; k < K; ++k) {
    SelectionMatrix s = chain(n, 0, d);
    s.append(chain(n, d + k * per, per));
    scheme.users.push_back(std::move(s));
    scheme.split.emplace_back(d);
  }
  return scheme;
}

UserScheme fixture_counterexample_necessary() {
  UserScheme scheme;
  scheme.n = 6;
  scheme.users.push_back(literal(6, {{3, 5}, {1, 6}, {1, 4}}));
  scheme.users.push_back(literal(6, {{2, 5}, {1, 3}, {5, 6}}));
  scheme.users.push_back(literal(6, {{2, 5}, {1, 3}, {2, 6}}));
  return scheme;
}

UserScheme fixture_counterexample_sufficiency() {
  // Rows reordered so each user's first block comes first:
  // user 1 is 1a, 1c | 1b, 1d and user 2 is 2a, 2b | 2c.
  UserScheme scheme;
  scheme.n = 6;
  scheme.users.push_back(literal(6, {{1, 2}, {3, 4}, {2, 3}, {4, 5}}));
  scheme.users.push_back(literal(6, {{1, 2}, {3, 4}, {5, 6}}));
  scheme.split = {2, 2};
  return scheme;
}

void write_selection(std::ostream& os, const SelectionMatrix& s) {
  os << "selection n=" << s.n() << '\n';
  for (const auto& r : s.rows()) os << r.p + 1 << ' ' << r.q + 1 << '\n';
}

SelectionMatrix read_selection(std::istream& is) {
  std::string line;
  if (!next_line(is, line)) throw std::invalid_argument("empty selection file");
  std::istringstream hs(line);
  std::string tag;
  std::string ntok;
  hs >> tag >> ntok;
  if (tag != "selection") throw std::invalid_argument("selection file must start with 'selection n=<n>'");
  SelectionMatrix s(parse_key(ntok, "n"), {});
  Pair r;
  while (next_line(is, line)) {
    if (!parse_row(line, s.n(), r)) throw std::invalid_argument("bad row line: " + line);
    s.append(r);
  }
  return s;
}

void write_scheme(std::ostream& os, const UserScheme& scheme) {
  os << "scheme n=" << scheme.n << " K=" << scheme.K() << '\n';
  for (std::size_t k = 0; k < scheme.K(); ++k) {
    os << "user " << k + 1;
    if (k < scheme.split.size() && scheme.split[k]) os << " split=" << *scheme.split[k];
    os << '\n';
    for (const auto& r : scheme.users[k].rows()) os << r.p + 1 << ' ' << r.q + 1 << '\n';
  }
}

UserScheme read_scheme(std::istream& is) {
  std::string line;
  if (!next_line(is, line)) throw std::invalid_argument("empty scheme file");
  std::istringstream hs(line);
  std::string tag;
  std::string ntok;
  std::string ktok;
  hs >> tag >> ntok >> ktok;
  if (tag != "scheme") throw std::invalid_argument("scheme file must start with 'scheme n=<n> K=<K>'");
  UserScheme scheme;
  scheme.n = parse_key(ntok, "n");
  const std::size_t K = parse_key(ktok, "K");
  bool any_split = false;
  while (next_line(is, line)) {
    if (line.rfind("user", 0) == 0) {
      std::istringstream us(line);
      std::string word;
      std::size_t id = 0;
      us >> word >> id;
      if (id != scheme.users.size() + 1) throw std::invalid_argument("users must be listed in order 1..K");
      scheme.users.emplace_back(scheme.n, std::vector<Pair>{});
      std::string opt;
      std::optional<std::size_t> split;
      if (us >> opt) {
        split = parse_key(opt, "split");
        any_split = true;
      }
      scheme.split.push_back(split);
      continue;
    }
    if (scheme.users.empty()) throw std::invalid_argument("row line before any 'user' line");
    Pair r;
    if (!parse_row(line, scheme.n, r)) throw std::invalid_argument("bad row line: " + line);
    scheme.users.back().append(r);
  }
  if (scheme.users.size() != K) throw std::invalid_argument("scheme header K does not match user count");
  if (!any_split) scheme.split.clear();
  scheme.validate();
  return scheme;
}

}  // namespace crowdmetric
