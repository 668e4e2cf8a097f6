#pragma once

// Flat key=value run configuration. Every key has a documented default; a
// config file and command-line overrides are merged on top (later wins).

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mitgnn/error.hpp"
#include "mitgnn/synth.hpp"
#include "mitgnn/training.hpp"

namespace mitgnn {

enum class ValueKind { size, u64, real, boolean, text, size_list };

struct ConfigKey {
  const char* name;
  ValueKind kind;
  const char* default_value;
  const char* help;
};

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys{
      {"dim", ValueKind::size, "64", "embedding dimension d"},
      {"intents", ValueKind::size, "3", "intent heads T"},
      {"layers", ValueKind::size, "3", "propagation layers L"},
      {"lr", ValueKind::real, "0.0005", "Adam learning rate"},
      {"lambda", ValueKind::real, "0.0001", "L2 regularization weight"},
      {"dropout", ValueKind::real, "0.1", "dropout after each layer (training only)"},
      {"epochs", ValueKind::size, "50", "training epochs"},
      {"triples_per_epoch", ValueKind::size, "0", "sampled triples per epoch (0: one per basket-item edge)"},
      {"negatives_per_positive", ValueKind::size, "1", "negatives drawn per positive"},
      {"batch_size", ValueKind::size, "4096", "triples per Adam step"},
      {"leaky_slope", ValueKind::real, "0.2", "LeakyReLU negative slope"},
      {"norm_eps", ValueKind::real, "1e-12", "epsilon of the row L2 normalization"},
      {"random_attention", ValueKind::boolean, "false", "random (not zero) attention vector init"},
      {"max_neighbors", ValueKind::size, "0", "neighbor subsampling cap (0: none)"},
      {"eval_every", ValueKind::size, "5", "epochs between validation passes"},
      {"val_frac", ValueKind::real, "0.05", "share of training baskets used for validation"},
      {"val_holdout_frac", ValueKind::real, "0.2", "items held out of each validation basket"},
      {"checkpoint_every", ValueKind::size, "0", "epochs between periodic checkpoints (0: never)"},
      {"seed", ValueKind::u64, "42", "seed of every randomized step"},
      {"split_mode", ValueKind::text, "transductive", "transductive | inductive"},
      {"holdout_frac", ValueKind::real, "0.2", "transductive held-out item share per basket"},
      {"seed_count", ValueKind::size, "5", "inductive seed items per test basket"},
      {"min_basket_items", ValueKind::size, "30", "ingest: drop baskets with fewer items"},
      {"min_user_baskets", ValueKind::size, "5", "ingest: drop users with fewer baskets"},
      {"k_set", ValueKind::size_list, "10,20,30,40,60,80,100", "cutoffs K of the metrics"},
      {"per_case", ValueKind::boolean, "false", "eval: also write per_case.tsv"},
      {"out", ValueKind::text, ".", "output directory"},
      {"input", ValueKind::text, "", "ingest: interaction CSV"},
      {"graph", ValueKind::text, "", "graph cache (default <out>/graph.cache)"},
      {"split", ValueKind::text, "", "split file (default <out>/split.tsv)"},
      {"checkpoint", ValueKind::text, "", "model checkpoint (default <out>/model.ckpt)"},
      {"user", ValueKind::text, "", "infer: external user id"},
      {"items", ValueKind::text, "", "infer: comma-separated seed item ids"},
      {"top", ValueKind::size, "10", "infer: ranked items to print"},
      {"tolerance", ValueKind::real, "1e-4", "gradcheck: max relative error"},
      {"fd_step", ValueKind::real, "1e-5", "gradcheck: central difference step"},
      {"grid_intents", ValueKind::size_list, "1..5", "grid: values of T"},
      {"grid_layers", ValueKind::size_list, "1..4", "grid: values of L"},
      {"grid_k", ValueKind::size, "100", "grid: Recall cutoff"},
      {"synth_users", ValueKind::size, "50", "synth: users"},
      {"synth_items", ValueKind::size, "300", "synth: items"},
      {"synth_intents", ValueKind::size, "3", "synth: planted intents"},
      {"synth_items_per_intent", ValueKind::size, "100", "synth: items per intent block"},
      {"synth_baskets_per_user", ValueKind::size, "8", "synth: baskets per user"},
      {"synth_intents_min", ValueKind::size, "2", "synth: min intents per basket"},
      {"synth_intents_max", ValueKind::size, "2", "synth: max intents per basket"},
      {"synth_basket_items_min", ValueKind::size, "12", "synth: min items per basket"},
      {"synth_basket_items_max", ValueKind::size, "20", "synth: max items per basket"},
      {"synth_noise", ValueKind::real, "0.05", "synth: share of uniformly random items"},
  };
  return keys;
}

// Defaults that differ per command; explicit settings still win.
inline std::map<std::string, std::string> command_defaults(const std::string& command) {
  if (command == "gradcheck") {
    return {{"dim", "4"}, {"intents", "2"}, {"layers", "2"}, {"lambda", "0.001"},
            {"random_attention", "true"}};
  }
  return {};
}

namespace detail {

inline const ConfigKey* find_key(const std::string& name) {
  for (const auto& k : config_keys())
    if (name == k.name) return &k;
  return nullptr;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size() || text.empty())
    throw Error(ErrorKind::config, key + ": expected a non-negative integer, got '" + text + "'");
  return v;
}

inline double parse_real(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (text.empty() || used != text.size() || !std::isfinite(v))
    throw Error(ErrorKind::config, key + ": expected a finite number, got '" + text + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw Error(ErrorKind::config, key + ": expected true or false, got '" + text + "'");
}

// "a,b,c" or "a..b" (inclusive).
inline std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    const auto lo = parse_u64(key, trim(text.substr(0, dots)));
    const auto hi = parse_u64(key, trim(text.substr(dots + 2)));
    if (hi < lo) throw Error(ErrorKind::config, key + ": empty range '" + text + "'");
    for (auto v = lo; v <= hi; ++v) out.push_back(static_cast<std::size_t>(v));
    return out;
  }
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) out.push_back(static_cast<std::size_t>(parse_u64(key, trim(part))));
  if (out.empty()) throw Error(ErrorKind::config, key + ": empty list");
  return out;
}

}  // namespace detail

class RunConfig {
 public:
  explicit RunConfig(const std::string& command = "") {
    for (const auto& k : config_keys()) values_[k.name] = k.default_value;
    for (const auto& [k, v] : command_defaults(command)) values_[k] = v;
  }

  void set(const std::string& key, const std::string& value) {
    const ConfigKey* k = detail::find_key(key);
    if (!k) throw Error(ErrorKind::config, "unknown config key '" + key + "'");
    check_value(*k, value);
    values_[key] = value;
  }

  // Lines of key=value; '#' starts a comment.
  void merge(std::istream& in, const std::string& source = "<config>") {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw Error(ErrorKind::config, source + ":" + std::to_string(lineno) + ": expected key=value");
      }
      set(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
  }

  void merge_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open config " + path);
    merge(in, path);
  }

  const std::string& text(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw Error(ErrorKind::config, "unknown config key '" + key + "'");
    return it->second;
  }
  std::size_t size(const std::string& key) const {
    return static_cast<std::size_t>(detail::parse_u64(key, text(key)));
  }
  std::uint64_t u64(const std::string& key) const { return detail::parse_u64(key, text(key)); }
  double real(const std::string& key) const { return detail::parse_real(key, text(key)); }
  bool boolean(const std::string& key) const { return detail::parse_bool(key, text(key)); }
  std::vector<std::size_t> sizes(const std::string& key) const {
    return detail::parse_size_list(key, text(key));
  }

  // Key-sorted, so identical settings serialize identically.
  void write(std::ostream& out) const {
    for (const auto& [k, v] : values_) out << k << '=' << v << '\n';
  }

  TrainConfig train_config() const {
    TrainConfig c;
    c.dim = size("dim");
    c.intents = size("intents");
    c.layers = size("layers");
    c.learning_rate = real("lr");
    c.lambda = real("lambda");
    c.dropout = real("dropout");
    c.epochs = size("epochs");
    c.triples_per_epoch = size("triples_per_epoch");
    c.negatives_per_positive = size("negatives_per_positive");
    c.batch_size = size("batch_size");
    c.seed = u64("seed");
    c.leaky_slope = real("leaky_slope");
    c.norm_eps = real("norm_eps");
    c.val_frac = real("val_frac");
    c.val_holdout_frac = real("val_holdout_frac");
    c.eval_every = size("eval_every");
    c.checkpoint_every = size("checkpoint_every");
    c.max_neighbors = size("max_neighbors");
    c.random_attention_init = boolean("random_attention");
    c.validate();
    return c;
  }

  SynthSpec synth_spec() const {
    SynthSpec s;
    s.num_users = size("synth_users");
    s.num_items = size("synth_items");
    s.num_intents = size("synth_intents");
    s.items_per_intent = size("synth_items_per_intent");
    s.baskets_per_user = size("synth_baskets_per_user");
    s.intents_per_basket_min = size("synth_intents_min");
    s.intents_per_basket_max = size("synth_intents_max");
    s.items_per_basket_min = size("synth_basket_items_min");
    s.items_per_basket_max = size("synth_basket_items_max");
    s.noise_rate = real("synth_noise");
    s.seed = u64("seed");
    s.validate();
    return s;
  }

 private:
  static void check_value(const ConfigKey& k, const std::string& value) {
    switch (k.kind) {
      case ValueKind::size:
      case ValueKind::u64: detail::parse_u64(k.name, value); break;
      case ValueKind::real: detail::parse_real(k.name, value); break;
      case ValueKind::boolean: detail::parse_bool(k.name, value); break;
      case ValueKind::size_list: detail::parse_size_list(k.name, value); break;
      case ValueKind::text: break;
    }
  }

  std::map<std::string, std::string> values_;
};

}  // namespace mitgnn
