#pragma once

// Tripartite user / basket / item graph, CSV ingestion and the two
// evaluation splits (transductive holdout inside baskets, inductive holdout
// of each user's most recent basket).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "mitgnn/error.hpp"

namespace mitgnn {

inline constexpr std::size_t kNone = static_cast<std::size_t>(-1);

enum class EntityKind { user, basket, item };

struct EntityId {
  EntityKind kind;
  std::size_t index;
  friend bool operator==(const EntityId&, const EntityId&) = default;
};

// Bidirectional map between opaque external ids and dense indices.
class IdMap {
 public:
  std::size_t intern(const std::string& external) {
    auto [it, inserted] = index_.emplace(external, names_.size());
    if (inserted) names_.push_back(external);
    return it->second;
  }
  std::optional<std::size_t> find(const std::string& external) const {
    auto it = index_.find(external);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  std::size_t require(const std::string& external, const char* what) const {
    auto idx = find(external);
    if (!idx) throw Error(ErrorKind::lookup, std::string("unknown ") + what + " id '" + external + "'");
    return *idx;
  }
  const std::string& name(std::size_t index) const { return names_.at(index); }
  std::size_t size() const noexcept { return names_.size(); }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct InteractionRecord {
  std::size_t user = 0;
  std::size_t basket = 0;
  std::size_t item = 0;
  std::optional<std::uint64_t> order;
  friend bool operator==(const InteractionRecord&, const InteractionRecord&) = default;
};

// Deduplicated records plus the id tables needed to export results.
struct Interactions {
  std::vector<InteractionRecord> records;
  IdMap users;
  IdMap baskets;
  IdMap items;
  bool has_order = false;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"') {
        if (k + 1 < line.size() && line[k + 1] == '"') {
          field.push_back('"');
          ++k;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

}  // namespace detail

// Reads `user_id,basket_id,item_id[,order]` (columns in any order).
inline Interactions parse_interactions(std::istream& in, const std::string& source = "<stream>") {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::format, source + ": missing header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = detail::split_csv_line(line);
  auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t k = 0; k < header.size(); ++k)
      if (header[k] == name) return k;
    return std::nullopt;
  };
  const auto user_col = column("user_id");
  const auto basket_col = column("basket_id");
  const auto item_col = column("item_id");
  const auto order_col = column("order");
  for (auto [col, name] : {std::pair{user_col, "user_id"}, std::pair{basket_col, "basket_id"},
                           std::pair{item_col, "item_id"}}) {
    if (!col) throw Error(ErrorKind::format, source + ": missing column " + name);
  }

  Interactions out;
  out.has_order = order_col.has_value();
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::vector<std::size_t> basket_owner;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = detail::split_csv_line(line);
    const std::size_t needed =
        std::max({*user_col, *basket_col, *item_col, order_col.value_or(0)}) + 1;
    if (fields.size() < needed) {
      throw Error(ErrorKind::format, source + ":" + std::to_string(line_no) + ": expected " +
                                         std::to_string(needed) + " fields");
    }
    InteractionRecord rec;
    rec.user = out.users.intern(fields[*user_col]);
    rec.basket = out.baskets.intern(fields[*basket_col]);
    rec.item = out.items.intern(fields[*item_col]);
    if (order_col) {
      const std::string& text = fields[*order_col];
      std::size_t used = 0;
      unsigned long long value = 0;
      try {
        value = std::stoull(text, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != text.size() || text.front() == '-') {
        throw Error(ErrorKind::format, source + ":" + std::to_string(line_no) +
                                           ": order must be a non-negative integer, got '" +
                                           text + "'");
      }
      rec.order = value;
    }
    if (rec.basket >= basket_owner.size()) basket_owner.resize(rec.basket + 1, kNone);
    if (basket_owner[rec.basket] == kNone) {
      basket_owner[rec.basket] = rec.user;
    } else if (basket_owner[rec.basket] != rec.user) {
      throw Error(ErrorKind::integrity, "basket '" + fields[*basket_col] +
                                            "' appears under two users ('" +
                                            out.users.name(basket_owner[rec.basket]) + "' and '" +
                                            fields[*user_col] + "')");
    }
    if (!seen.emplace(rec.basket, rec.item).second) continue;
    out.records.push_back(rec);
  }
  return out;
}

inline Interactions load_interactions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  return parse_interactions(in, path);
}

// Drops baskets with fewer than min_basket_items items, then users left with
// fewer than min_user_baskets baskets. Indices are re-densified.
inline Interactions filter_interactions(const Interactions& in, std::size_t min_basket_items,
                                        std::size_t min_user_baskets) {
  std::vector<std::size_t> basket_size(in.baskets.size(), 0);
  for (const auto& r : in.records) ++basket_size[r.basket];
  std::vector<std::set<std::size_t>> user_baskets(in.users.size());
  for (const auto& r : in.records)
    if (basket_size[r.basket] >= min_basket_items) user_baskets[r.user].insert(r.basket);

  Interactions out;
  out.has_order = in.has_order;
  for (const auto& r : in.records) {
    if (basket_size[r.basket] < min_basket_items) continue;
    if (user_baskets[r.user].size() < min_user_baskets) continue;
    InteractionRecord rec = r;
    rec.user = out.users.intern(in.users.name(r.user));
    rec.basket = out.baskets.intern(in.baskets.name(r.basket));
    rec.item = out.items.intern(in.items.name(r.item));
    out.records.push_back(rec);
  }
  return out;
}

inline void write_interactions(std::ostream& out, const Interactions& data) {
  out << (data.has_order ? "user_id,basket_id,item_id,order\n" : "user_id,basket_id,item_id\n");
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q.push_back('"');
      q.push_back(c);
    }
    return q + "\"";
  };
  for (const auto& r : data.records) {
    out << quote(data.users.name(r.user)) << ',' << quote(data.baskets.name(r.basket)) << ','
        << quote(data.items.name(r.item));
    if (data.has_order) out << ',' << r.order.value_or(0);
    out << '\n';
  }
}

// Immutable tripartite graph. Index spaces (N users, S baskets, M items) are
// fixed at construction; a basket without an owner is absent from the graph
// (this is how inductive test baskets are removed without renumbering).
class BasketGraph {
 public:
  BasketGraph() = default;

  // owner[b] == kNone marks an absent basket, which must then have no items.
  BasketGraph(std::size_t num_users, std::size_t num_items, std::vector<std::size_t> owner,
              std::vector<std::vector<std::size_t>> basket_items,
              std::vector<std::uint64_t> basket_order = {})
      : num_users_(num_users),
        num_items_(num_items),
        owner_(std::move(owner)),
        basket_items_(std::move(basket_items)),
        basket_order_(std::move(basket_order)) {
    const std::size_t s = owner_.size();
    if (basket_items_.size() != s) throw Error(ErrorKind::shape, "basket table size mismatch");
    if (basket_order_.empty()) {
      basket_order_.resize(s);
      for (std::size_t b = 0; b < s; ++b) basket_order_[b] = b;
    }
    if (basket_order_.size() != s) throw Error(ErrorKind::shape, "basket order size mismatch");

    user_baskets_.assign(num_users_, {});
    item_baskets_.assign(num_items_, {});
    user_items_.assign(num_users_, {});
    item_users_.assign(num_items_, {});
    for (std::size_t b = 0; b < s; ++b) {
      auto& items = basket_items_[b];
      std::sort(items.begin(), items.end());
      items.erase(std::unique(items.begin(), items.end()), items.end());
      if (owner_[b] == kNone) {
        if (!items.empty()) {
          throw Error(ErrorKind::integrity, "basket " + std::to_string(b) + " has items but no user");
        }
        continue;
      }
      if (owner_[b] >= num_users_) throw Error(ErrorKind::integrity, "basket owner out of range");
      if (items.empty()) {
        throw Error(ErrorKind::integrity, "basket " + std::to_string(b) + " has no items");
      }
      user_baskets_[owner_[b]].push_back(b);
      for (std::size_t i : items) {
        if (i >= num_items_) throw Error(ErrorKind::integrity, "item index out of range");
        item_baskets_[i].push_back(b);
        user_items_[owner_[b]].push_back(i);
      }
      num_basket_item_edges_ += items.size();
    }
    for (std::size_t u = 0; u < num_users_; ++u) {
      auto& items = user_items_[u];
      std::sort(items.begin(), items.end());
      items.erase(std::unique(items.begin(), items.end()), items.end());
      for (std::size_t i : items) item_users_[i].push_back(u);
      num_user_item_edges_ += items.size();
    }
  }

  std::size_t num_users() const noexcept { return num_users_; }
  std::size_t num_baskets() const noexcept { return owner_.size(); }
  std::size_t num_items() const noexcept { return num_items_; }

  bool has_basket(std::size_t b) const { return b < owner_.size() && owner_[b] != kNone; }
  std::size_t owner(std::size_t b) const { return owner_.at(b); }
  std::uint64_t basket_order(std::size_t b) const { return basket_order_.at(b); }
  const std::vector<std::size_t>& owners() const noexcept { return owner_; }
  const std::vector<std::uint64_t>& basket_orders() const noexcept { return basket_order_; }

  // N_i(b), N_b(u), N_i(u), N_b(i), N_u(i); all sorted ascending.
  const std::vector<std::size_t>& basket_items(std::size_t b) const { return basket_items_.at(b); }
  const std::vector<std::size_t>& user_baskets(std::size_t u) const { return user_baskets_.at(u); }
  const std::vector<std::size_t>& user_items(std::size_t u) const { return user_items_.at(u); }
  const std::vector<std::size_t>& item_baskets(std::size_t i) const { return item_baskets_.at(i); }
  const std::vector<std::size_t>& item_users(std::size_t i) const { return item_users_.at(i); }

  const std::vector<std::vector<std::size_t>>& all_basket_items() const noexcept {
    return basket_items_;
  }
  const std::vector<std::vector<std::size_t>>& all_user_baskets() const noexcept {
    return user_baskets_;
  }
  const std::vector<std::vector<std::size_t>>& all_user_items() const noexcept {
    return user_items_;
  }
  const std::vector<std::vector<std::size_t>>& all_item_baskets() const noexcept {
    return item_baskets_;
  }
  const std::vector<std::vector<std::size_t>>& all_item_users() const noexcept {
    return item_users_;
  }

  std::size_t present_basket_count() const {
    return static_cast<std::size_t>(
        std::count_if(owner_.begin(), owner_.end(), [](std::size_t o) { return o != kNone; }));
  }
  std::size_t num_user_basket_edges() const { return present_basket_count(); }
  std::size_t num_basket_item_edges() const noexcept { return num_basket_item_edges_; }
  std::size_t num_user_item_edges() const noexcept { return num_user_item_edges_; }

  double density() const {
    const double denom = static_cast<double>(num_baskets()) * static_cast<double>(num_items_);
    return denom > 0 ? static_cast<double>(num_basket_item_edges_) / denom : 0.0;
  }

  // Throws an integrity error if any structural invariant fails.
  void check_invariants() const {
    for (std::size_t b = 0; b < num_baskets(); ++b) {
      if (!has_basket(b)) continue;
      if (basket_items_[b].empty()) throw Error(ErrorKind::integrity, "empty basket");
      if (!std::is_sorted(basket_items_[b].begin(), basket_items_[b].end()))
        throw Error(ErrorKind::integrity, "unsorted basket items");
    }
    std::vector<std::set<std::size_t>> projection(num_users_);
    for (std::size_t b = 0; b < num_baskets(); ++b)
      if (has_basket(b))
        projection[owner_[b]].insert(basket_items_[b].begin(), basket_items_[b].end());
    for (std::size_t u = 0; u < num_users_; ++u) {
      if (!std::equal(projection[u].begin(), projection[u].end(), user_items_[u].begin(),
                      user_items_[u].end())) {
        throw Error(ErrorKind::integrity, "user-item edges are not the basket projection");
      }
    }
  }

  friend bool operator==(const BasketGraph& a, const BasketGraph& b) {
    return a.num_users_ == b.num_users_ && a.num_items_ == b.num_items_ && a.owner_ == b.owner_ &&
           a.basket_items_ == b.basket_items_ && a.basket_order_ == b.basket_order_;
  }

 private:
  std::size_t num_users_ = 0;
  std::size_t num_items_ = 0;
  std::vector<std::size_t> owner_;
  std::vector<std::vector<std::size_t>> basket_items_;
  std::vector<std::uint64_t> basket_order_;
  std::vector<std::vector<std::size_t>> user_baskets_;
  std::vector<std::vector<std::size_t>> item_baskets_;
  std::vector<std::vector<std::size_t>> user_items_;
  std::vector<std::vector<std::size_t>> item_users_;
  std::size_t num_basket_item_edges_ = 0;
  std::size_t num_user_item_edges_ = 0;
};

// Builds the graph; user-item edges are always derived from baskets.
inline BasketGraph build_graph(const std::vector<InteractionRecord>& records,
                               std::size_t num_users, std::size_t num_baskets,
                               std::size_t num_items) {
  if (records.empty()) throw Error(ErrorKind::data, "build_graph: no interaction records");
  std::vector<std::size_t> owner(num_baskets, kNone);
  std::vector<std::vector<std::size_t>> items(num_baskets);
  std::vector<std::uint64_t> order(num_baskets);
  for (std::size_t b = 0; b < num_baskets; ++b) order[b] = b;
  for (const auto& r : records) {
    if (r.user >= num_users || r.basket >= num_baskets || r.item >= num_items) {
      throw Error(ErrorKind::integrity, "record index outside declared counts");
    }
    if (owner[r.basket] != kNone && owner[r.basket] != r.user) {
      throw Error(ErrorKind::integrity,
                  "basket " + std::to_string(r.basket) + " appears under two users");
    }
    owner[r.basket] = r.user;
    items[r.basket].push_back(r.item);
    if (r.order) order[r.basket] = *r.order;
  }
  return BasketGraph(num_users, num_items, std::move(owner), std::move(items), std::move(order));
}

inline BasketGraph build_graph(const Interactions& data) {
  return build_graph(data.records, data.users.size(), data.baskets.size(), data.items.size());
}

enum class SplitMode { transductive, inductive };

inline const char* to_string(SplitMode mode) {
  return mode == SplitMode::transductive ? "transductive" : "inductive";
}

inline SplitMode parse_split_mode(const std::string& text) {
  if (text == "transductive") return SplitMode::transductive;
  if (text == "inductive") return SplitMode::inductive;
  throw Error(ErrorKind::config, "unknown split mode '" + text + "'");
}

struct TestCase {
  std::size_t basket = 0;
  std::size_t user = 0;
  std::vector<std::size_t> seed_items;
  std::vector<std::size_t> ground_truth;
  friend bool operator==(const TestCase&, const TestCase&) = default;
};

struct DataSplit {
  SplitMode mode = SplitMode::transductive;
  BasketGraph train_graph;
  std::vector<TestCase> test_cases;
  std::vector<std::string> warnings;
};

// Holds out ceil(holdout_frac * |b|) items of every basket (at least one
// item always stays in training).
inline DataSplit split_transductive(const BasketGraph& graph, double holdout_frac,
                                    std::uint64_t seed) {
  if (!(holdout_frac > 0.0 && holdout_frac < 1.0)) {
    throw Error(ErrorKind::config, "holdout fraction must lie in (0, 1)");
  }
  std::mt19937_64 rng(seed);
  DataSplit split;
  split.mode = SplitMode::transductive;
  std::vector<std::vector<std::size_t>> train_items(graph.num_baskets());
  for (std::size_t b = 0; b < graph.num_baskets(); ++b) {
    if (!graph.has_basket(b)) continue;
    std::vector<std::size_t> items = graph.basket_items(b);
    if (items.size() < 2) {
      train_items[b] = items;
      continue;
    }
    std::shuffle(items.begin(), items.end(), rng);
    std::size_t held = static_cast<std::size_t>(
        std::ceil(holdout_frac * static_cast<double>(items.size()) - 1e-9));
    if (held >= items.size()) {
      split.warnings.push_back("basket " + std::to_string(b) +
                               ": holdout would empty the basket, keeping 1 training item");
      held = items.size() - 1;
    }
    TestCase tc;
    tc.basket = b;
    tc.user = graph.owner(b);
    tc.ground_truth.assign(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(held));
    tc.seed_items.assign(items.begin() + static_cast<std::ptrdiff_t>(held), items.end());
    std::sort(tc.ground_truth.begin(), tc.ground_truth.end());
    std::sort(tc.seed_items.begin(), tc.seed_items.end());
    train_items[b] = tc.seed_items;
    split.test_cases.push_back(std::move(tc));
  }
  split.train_graph = BasketGraph(graph.num_users(), graph.num_items(), graph.owners(),
                                  std::move(train_items), graph.basket_orders());
  return split;
}

// Removes each user's most recent basket with more than seed_count items and
// samples seed_count of its items as the visible seed.
inline DataSplit split_inductive(const BasketGraph& graph, std::size_t seed_count,
                                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  DataSplit split;
  split.mode = SplitMode::inductive;
  std::vector<std::size_t> owner = graph.owners();
  std::vector<std::vector<std::size_t>> items = graph.all_basket_items();
  for (std::size_t u = 0; u < graph.num_users(); ++u) {
    std::vector<std::size_t> baskets = graph.user_baskets(u);
    if (baskets.empty()) continue;
    if (baskets.size() < 2) {
      split.warnings.push_back("user " + std::to_string(u) +
                               " has a single basket and contributes no test case");
      continue;
    }
    std::sort(baskets.begin(), baskets.end(), [&](std::size_t a, std::size_t b) {
      return std::pair{graph.basket_order(a), a} < std::pair{graph.basket_order(b), b};
    });
    auto chosen = std::find_if(baskets.rbegin(), baskets.rend(), [&](std::size_t b) {
      return graph.basket_items(b).size() > seed_count;
    });
    if (chosen == baskets.rend()) {
      split.warnings.push_back("user " + std::to_string(u) + " has no basket with more than " +
                               std::to_string(seed_count) + " items");
      continue;
    }
    const std::size_t b = *chosen;
    std::vector<std::size_t> shuffled = graph.basket_items(b);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    TestCase tc;
    tc.basket = b;
    tc.user = u;
    tc.seed_items.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(seed_count));
    tc.ground_truth.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(seed_count), shuffled.end());
    std::sort(tc.seed_items.begin(), tc.seed_items.end());
    std::sort(tc.ground_truth.begin(), tc.ground_truth.end());
    owner[b] = kNone;
    items[b].clear();
    split.test_cases.push_back(std::move(tc));
  }
  split.train_graph = BasketGraph(graph.num_users(), graph.num_items(), std::move(owner),
                                  std::move(items), graph.basket_orders());
  return split;
}

namespace detail {

inline std::string join_ids(const std::vector<std::size_t>& items, const IdMap& ids) {
  std::string out;
  for (std::size_t k = 0; k < items.size(); ++k) {
    const std::string& name = ids.name(items[k]);
    if (name.find_first_of(",\t\n") != std::string::npos) {
      throw Error(ErrorKind::format, "item id '" + name + "' cannot be written to a split file");
    }
    if (k) out.push_back(',');
    out += name;
  }
  return out;
}

inline std::vector<std::string> split_on(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  if (!text.empty() && text.back() == sep) parts.emplace_back();
  return parts;
}

}  // namespace detail

// One test case per line: basket<TAB>user<TAB>seed,items<TAB>truth,items,
// preceded by a `#mode=<mode>` line.
inline void write_split(std::ostream& out, const DataSplit& split, const Interactions& ids) {
  out << "#mode=" << to_string(split.mode) << '\n';
  for (const auto& tc : split.test_cases) {
    out << ids.baskets.name(tc.basket) << '\t' << ids.users.name(tc.user) << '\t'
        << detail::join_ids(tc.seed_items, ids.items) << '\t'
        << detail::join_ids(tc.ground_truth, ids.items) << '\n';
  }
}

// Rebuilds a DataSplit from its serialization and the full graph it was cut from.
inline DataSplit read_split(std::istream& in, const BasketGraph& full, const Interactions& ids) {
  DataSplit split;
  std::string line;
  bool have_mode = false;
  std::vector<std::size_t> owner = full.owners();
  std::vector<std::vector<std::size_t>> items = full.all_basket_items();
  auto parse_items = [&](const std::string& field) {
    std::vector<std::size_t> out;
    if (field.empty()) return out;
    for (const auto& name : detail::split_on(field, ',')) out.push_back(ids.items.require(name, "item"));
    std::sort(out.begin(), out.end());
    return out;
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.rfind("#mode=", 0) == 0) {
      split.mode = parse_split_mode(line.substr(6));
      have_mode = true;
      continue;
    }
    if (line[0] == '#') continue;
    const auto fields = detail::split_on(line, '\t');
    if (fields.size() != 4) throw Error(ErrorKind::format, "split line needs 4 tab-separated fields");
    TestCase tc;
    tc.basket = ids.baskets.require(fields[0], "basket");
    tc.user = ids.users.require(fields[1], "user");
    tc.seed_items = parse_items(fields[2]);
    tc.ground_truth = parse_items(fields[3]);
    if (full.owner(tc.basket) != tc.user) {
      throw Error(ErrorKind::integrity, "split basket '" + fields[0] + "' is not owned by '" + fields[1] + "'");
    }
    split.test_cases.push_back(std::move(tc));
  }
  if (!have_mode) throw Error(ErrorKind::format, "split file lacks a #mode= line");
  for (const auto& tc : split.test_cases) {
    if (split.mode == SplitMode::transductive) {
      items[tc.basket] = tc.seed_items;
    } else {
      owner[tc.basket] = kNone;
      items[tc.basket].clear();
    }
  }
  split.train_graph = BasketGraph(full.num_users(), full.num_items(), std::move(owner),
                                  std::move(items), full.basket_orders());
  return split;
}

}  // namespace mitgnn
