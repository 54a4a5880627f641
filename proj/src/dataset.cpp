#include "agenda/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <unordered_map>

#include <fmt/format.h>

namespace agenda {
namespace {

struct RawRating {
  std::string user;
  std::string item;
  double rating;
  std::size_t line;
};

std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(std::string_view line, std::string_view sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = line.find(sep, pos);
    if (next == std::string_view::npos) {
      out.emplace_back(trim(line.substr(pos)));
      break;
    }
    out.emplace_back(trim(line.substr(pos, next - pos)));
    pos = next + sep.size();
  }
  return out;
}

std::optional<long long> as_integer(const std::string& s) {
  long long v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || p != end || s.empty()) return std::nullopt;
  return v;
}

std::optional<double> as_real(const std::string& s) {
  if (s.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

/// Sorted unique labels; numeric order when every label is an integer.
std::vector<std::string> ordered_labels(std::vector<std::string> labels) {
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  const bool numeric =
      std::all_of(labels.begin(), labels.end(), [](const auto& s) { return as_integer(s).has_value(); });
  if (numeric) {
    std::sort(labels.begin(), labels.end(),
              [](const auto& a, const auto& b) { return *as_integer(a) < *as_integer(b); });
  }
  return labels;
}

Dataset assemble(const std::vector<RawRating>& raw,
                 const std::unordered_map<std::string, UserType>& types, LabelNames names) {
  std::vector<std::string> users, items;
  users.reserve(raw.size());
  items.reserve(raw.size());
  for (const auto& r : raw) {
    users.push_back(r.user);
    items.push_back(r.item);
  }
  Dataset d;
  d.label_names = std::move(names);
  d.user_labels = ordered_labels(std::move(users));
  d.item_labels = ordered_labels(std::move(items));
  d.n_users = static_cast<int>(d.user_labels.size());
  d.n_items = static_cast<int>(d.item_labels.size());

  std::unordered_map<std::string, UserId> uidx;
  std::unordered_map<std::string, ItemId> iidx;
  for (int i = 0; i < d.n_users; ++i) uidx.emplace(d.user_labels[i], i);
  for (int j = 0; j < d.n_items; ++j) iidx.emplace(d.item_labels[j], j);

  d.types.resize(d.n_users);
  for (int i = 0; i < d.n_users; ++i) {
    auto it = types.find(d.user_labels[i]);
    if (it == types.end()) {
      throw Error(fmt::format("user '{}' has ratings but no type entry", d.user_labels[i]));
    }
    d.types[i] = it->second;
  }

  std::set<std::pair<UserId, ItemId>> seen;
  d.ratings.reserve(raw.size());
  for (const auto& r : raw) {
    const UserId u = uidx.at(r.user);
    const ItemId j = iidx.at(r.item);
    if (!seen.emplace(u, j).second) {
      throw Error(fmt::format("duplicate rating for user '{}' item '{}' (line {})", r.user, r.item,
                              r.line));
    }
    d.ratings.push_back({u, j, r.rating});
  }
  return d;
}

std::ifstream open_input(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(fmt::format("cannot open '{}'", p.string()));
  return in;
}

}  // namespace

std::vector<std::vector<std::pair<ItemId, double>>> Dataset::by_user() const {
  std::vector<std::vector<std::pair<ItemId, double>>> out(n_users);
  for (const auto& r : ratings) out[r.user].emplace_back(r.item, r.rating);
  return out;
}

std::vector<int> Dataset::item_counts() const {
  std::vector<int> c(n_items, 0);
  for (const auto& r : ratings) ++c[r.item];
  return c;
}

std::vector<int> Dataset::user_counts() const {
  std::vector<int> c(n_users, 0);
  for (const auto& r : ratings) ++c[r.user];
  return c;
}

void Dataset::validate() const {
  if (static_cast<int>(types.size()) != n_users) throw Error("types size differs from n_users");
  std::set<std::pair<UserId, ItemId>> seen;
  std::vector<bool> has(n_users, false);
  for (const auto& r : ratings) {
    if (r.user < 0 || r.user >= n_users) throw Error("user id out of range");
    if (r.item < 0 || r.item >= n_items) throw Error("item id out of range");
    if (!seen.emplace(r.user, r.item).second) throw Error("duplicate rating");
    has[r.user] = true;
  }
  if (std::find(has.begin(), has.end(), false) != has.end()) throw Error("user without ratings");
}

Attribute parse_attribute(const std::string& s) {
  if (s == "gender") return Attribute::gender;
  if (s == "age") return Attribute::age;
  throw Error(fmt::format("unknown attribute '{}' (expected gender or age)", s));
}

Dataset parse_movielens(const std::filesystem::path& ratings_path,
                        const std::filesystem::path& users_path, Attribute attribute) {
  std::unordered_map<std::string, UserType> types;
  std::set<std::string> dropped;
  {
    auto in = open_input(users_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      const auto f = split(line, "::");
      if (f.size() != 5 || f[0].empty()) {
        throw Error(fmt::format("{}:{}: malformed users line", users_path.string(), lineno));
      }
      if (attribute == Attribute::gender) {
        if (f[1] == "F") {
          types[f[0]] = UserType::plus;
        } else if (f[1] == "M") {
          types[f[0]] = UserType::minus;
        } else {
          throw Error(fmt::format("{}:{}: unknown gender '{}'", users_path.string(), lineno, f[1]));
        }
      } else {
        const auto age = as_integer(f[2]);
        if (!age) throw Error(fmt::format("{}:{}: malformed age", users_path.string(), lineno));
        switch (*age) {
          case 1: dropped.insert(f[0]); break;
          case 18: case 25: case 35: types[f[0]] = UserType::plus; break;
          case 45: case 50: case 56: types[f[0]] = UserType::minus; break;
          default:
            throw Error(fmt::format("{}:{}: unknown age code {}", users_path.string(), lineno, *age));
        }
      }
    }
  }

  std::vector<RawRating> raw;
  {
    auto in = open_input(ratings_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      const auto f = split(line, "::");
      const auto rating = f.size() == 4 ? as_real(f[2]) : std::nullopt;
      if (f.size() != 4 || f[0].empty() || f[1].empty() || !rating) {
        throw Error(fmt::format("{}:{}: malformed ratings line", ratings_path.string(), lineno));
      }
      if (dropped.count(f[0])) continue;
      if (!types.count(f[0])) {
        throw Error(fmt::format("{}:{}: user {} missing from users file", ratings_path.string(),
                                lineno, f[0]));
      }
      raw.push_back({f[0], f[1], *rating, lineno});
    }
  }

  LabelNames names = attribute == Attribute::gender ? LabelNames{"F", "M"}
                                                    : LabelNames{"young", "adult"};
  return assemble(raw, types, std::move(names));
}

namespace {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lines;

  std::size_t column(const std::string& name, const std::filesystem::path& p) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(fmt::format("{}: missing column '{}'", p.string(), name));
    return static_cast<std::size_t>(it - header.begin());
  }
};

CsvTable read_csv(const std::filesystem::path& p) {
  auto in = open_input(p);
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split(line, ",");
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw Error(fmt::format("{}:{}: expected {} fields, got {}", p.string(), lineno,
                              t.header.size(), fields.size()));
    }
    t.rows.push_back(std::move(fields));
    t.lines.push_back(lineno);
  }
  if (t.header.empty()) throw Error(fmt::format("{}: missing header row", p.string()));
  return t;
}

class TypeMapper {
 public:
  explicit TypeMapper(const CsvSchema& s) : plus_(s.plus_class), minus_(s.minus_class) {}

  UserType map(const std::string& label, const std::string& where) {
    if (label == plus_) return UserType::plus;
    if (minus_.empty()) minus_ = label;
    if (label == minus_) return UserType::minus;
    throw Error(fmt::format("{}: type label '{}' not in declared pair ({}, {})", where, label, plus_,
                            minus_));
  }
  LabelNames names() const { return {plus_, minus_.empty() ? std::string("-1") : minus_}; }

 private:
  std::string plus_;
  std::string minus_;
};

}  // namespace

Dataset parse_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  const auto table = read_csv(path);
  const auto cu = table.column(schema.user_col, path);
  const auto ci = table.column(schema.item_col, path);
  const auto cr = table.column(schema.rating_col, path);

  TypeMapper mapper(schema);
  std::unordered_map<std::string, UserType> types;
  auto assign = [&](const std::string& user, const std::string& label, const std::string& where) {
    const auto t = mapper.map(label, where);
    auto [it, fresh] = types.emplace(user, t);
    if (!fresh && it->second != t) {
      throw Error(fmt::format("{}: conflicting type labels for user '{}'", where, user));
    }
  };

  if (schema.types_path) {
    const auto tt = read_csv(*schema.types_path);
    const auto tu = tt.column(schema.user_col, *schema.types_path);
    const auto tl = tt.column(schema.type_col, *schema.types_path);
    for (std::size_t k = 0; k < tt.rows.size(); ++k) {
      assign(tt.rows[k][tu], tt.rows[k][tl],
             fmt::format("{}:{}", schema.types_path->string(), tt.lines[k]));
    }
  }
  const std::optional<std::size_t> ct =
      schema.types_path ? std::nullopt : std::optional(table.column(schema.type_col, path));

  std::vector<RawRating> raw;
  raw.reserve(table.rows.size());
  for (std::size_t k = 0; k < table.rows.size(); ++k) {
    const auto& row = table.rows[k];
    const auto where = fmt::format("{}:{}", path.string(), table.lines[k]);
    const auto rating = as_real(row[cr]);
    if (!rating) throw Error(fmt::format("{}: unparsable rating '{}'", where, row[cr]));
    if (ct) assign(row[cu], row[*ct], where);
    raw.push_back({row[cu], row[ci], *rating, table.lines[k]});
  }
  return assemble(raw, types, mapper.names());
}

void write_csv(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  out << "user,item,rating,type\n";
  for (const auto& r : d.ratings) {
    out << fmt::format("{},{},{},{}\n", d.user_labels[r.user], d.item_labels[r.item], r.rating,
                       d.label_names.name(d.types[r.user]));
  }
}

Dataset filter_dataset(const Dataset& d, int min_user_ratings, int min_item_ratings) {
  if (min_user_ratings < 0 || min_item_ratings < 0) throw Error("thresholds must be >= 0");
  std::vector<bool> keep_user(d.n_users, true), keep_item(d.n_items, true);
  std::vector<bool> keep_rating(d.ratings.size(), true);

  for (bool changed = true; changed;) {
    changed = false;
    std::vector<int> uc(d.n_users, 0), ic(d.n_items, 0);
    for (std::size_t k = 0; k < d.ratings.size(); ++k) {
      if (!keep_rating[k]) continue;
      ++uc[d.ratings[k].user];
      ++ic[d.ratings[k].item];
    }
    for (int i = 0; i < d.n_users; ++i) {
      if (keep_user[i] && uc[i] < min_user_ratings) keep_user[i] = false, changed = true;
    }
    for (int j = 0; j < d.n_items; ++j) {
      if (keep_item[j] && ic[j] < min_item_ratings) keep_item[j] = false, changed = true;
    }
    for (std::size_t k = 0; k < d.ratings.size(); ++k) {
      keep_rating[k] = keep_rating[k] && keep_user[d.ratings[k].user] && keep_item[d.ratings[k].item];
    }
  }

  // Users left without ratings are dropped even at threshold 0.
  std::vector<bool> rated(d.n_users, false);
  for (std::size_t k = 0; k < d.ratings.size(); ++k) {
    if (keep_rating[k]) rated[d.ratings[k].user] = true;
  }

  Dataset out;
  out.label_names = d.label_names;
  std::vector<UserId> umap(d.n_users, -1);
  std::vector<ItemId> imap(d.n_items, -1);
  for (int i = 0; i < d.n_users; ++i) {
    if (!keep_user[i] || !rated[i]) continue;
    umap[i] = out.n_users++;
    out.types.push_back(d.types[i]);
    if (!d.user_labels.empty()) out.user_labels.push_back(d.user_labels[i]);
  }
  for (int j = 0; j < d.n_items; ++j) {
    if (!keep_item[j]) continue;
    imap[j] = out.n_items++;
    if (!d.item_labels.empty()) out.item_labels.push_back(d.item_labels[j]);
  }
  for (std::size_t k = 0; k < d.ratings.size(); ++k) {
    if (!keep_rating[k]) continue;
    const auto& r = d.ratings[k];
    out.ratings.push_back({umap[r.user], imap[r.item], r.rating});
  }
  if (out.ratings.empty()) throw Error("filter removed all data");
  return out;
}

Dataset subset_users(const Dataset& d, const std::vector<UserId>& users) {
  std::vector<UserId> sorted = users;
  std::sort(sorted.begin(), sorted.end());
  std::vector<UserId> umap(d.n_users, -1);
  Dataset out;
  out.label_names = d.label_names;
  out.n_items = d.n_items;
  out.item_labels = d.item_labels;
  for (const UserId u : sorted) {
    if (u < 0 || u >= d.n_users) throw Error("subset_users: user id out of range");
    if (umap[u] >= 0) continue;
    umap[u] = out.n_users++;
    out.types.push_back(d.types[u]);
    if (!d.user_labels.empty()) out.user_labels.push_back(d.user_labels[u]);
  }
  for (const auto& r : d.ratings) {
    if (umap[r.user] >= 0) out.ratings.push_back({umap[r.user], r.item, r.rating});
  }
  return out;
}

std::vector<Fold> split_folds(const Dataset& d, int k, std::uint64_t seed) {
  if (k < 2) throw Error("split_folds: k must be >= 2");
  if (k > d.n_users) throw Error(fmt::format("split_folds: k={} exceeds n_users={}", k, d.n_users));
  std::vector<UserId> order(d.n_users);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::vector<UserId>> members(k);
  for (std::size_t pos = 0; pos < order.size(); ++pos) members[pos % k].push_back(order[pos]);

  std::vector<Fold> folds;
  folds.reserve(k);
  for (int f = 0; f < k; ++f) {
    std::vector<UserId> rest;
    for (int g = 0; g < k; ++g) {
      if (g != f) rest.insert(rest.end(), members[g].begin(), members[g].end());
    }
    folds.push_back({subset_users(d, rest), subset_users(d, members[f])});
  }
  return folds;
}

}  // namespace agenda
