#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sigscat/dataset.hpp"
#include "sigscat/errors.hpp"
#include "sigscat/model.hpp"
#include "sigscat/serialize.hpp"
#include "sigscat/text.hpp"
#include "sigscat/training.hpp"

namespace sigscat {

struct SynthSettings {
  int writers = 15;
  int train_writers = 10;
  int genuine = 12;
  int forged = 12;
};

/// Everything one CLI run needs. Keys are "section.name"; see entries().
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string data_root;
  Layout layout = Layout::cedar;
  int train_writers = 40;       ///< seeded split size for layouts without folders
  int pair_cap = 0;             ///< per writer and pair type; 0 = all pairs
  int histogram_bins = 50;
  SynthSettings synth;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string output_dir = "sigscat-out";

  /// Every key with its current value, in file order.
  std::vector<std::pair<std::string, std::string>> entries() const {
    using text::format_double;
    auto out = model_config_entries(model);
    const std::vector<std::pair<std::string, std::string>> rest = {
        {"train.learning_rate", format_double(train.learning_rate)},
        {"train.batch_size", std::to_string(train.batch_size)},
        {"train.epochs", std::to_string(train.epochs)},
        {"train.margin", format_double(train.margin)},
        {"train.beta1", format_double(train.beta1)},
        {"train.beta2", format_double(train.beta2)},
        {"train.epsilon", format_double(train.epsilon)},
        {"train.negative_mix", format_double(train.negative_mix)},
        {"train.triplets_per_epoch", std::to_string(train.triplets_per_epoch)},
        {"data.root", data_root},
        {"data.layout", to_string(layout)},
        {"data.train_writers", std::to_string(train_writers)},
        {"eval.pair_cap", std::to_string(pair_cap)},
        {"eval.histogram_bins", std::to_string(histogram_bins)},
        {"synth.writers", std::to_string(synth.writers)},
        {"synth.train_writers", std::to_string(synth.train_writers)},
        {"synth.genuine", std::to_string(synth.genuine)},
        {"synth.forged", std::to_string(synth.forged)},
        {"run.seed", std::to_string(seed)},
        {"run.threads", std::to_string(threads)},
        {"run.output_dir", output_dir},
    };
    out.insert(out.end(), rest.begin(), rest.end());
    return out;
  }

  /// Sets one key. Unknown keys and malformed values raise ConfigError
  /// naming the key.
  void apply(const std::string& key, std::string_view value) {
    auto i = [&] { return static_cast<int>(text::parse_int(value, key)); };
    auto d = [&] { return text::parse_double(value, key); };
    if (apply_model_entry(model, key, value)) return;
    if (key == "train.learning_rate") train.learning_rate = d();
    else if (key == "train.batch_size") train.batch_size = i();
    else if (key == "train.epochs") train.epochs = i();
    else if (key == "train.margin") train.margin = d();
    else if (key == "train.beta1") train.beta1 = d();
    else if (key == "train.beta2") train.beta2 = d();
    else if (key == "train.epsilon") train.epsilon = d();
    else if (key == "train.negative_mix") train.negative_mix = d();
    else if (key == "train.triplets_per_epoch") train.triplets_per_epoch = i();
    else if (key == "data.root") data_root = std::string(text::trim(value));
    else if (key == "data.layout") {
      try {
        layout = parse_layout(text::trim(value));
      } catch (const ConfigError& e) {
        throw ConfigError(key + ": " + e.what());
      }
    } else if (key == "data.train_writers") train_writers = i();
    else if (key == "eval.pair_cap") pair_cap = i();
    else if (key == "eval.histogram_bins") histogram_bins = i();
    else if (key == "synth.writers") synth.writers = i();
    else if (key == "synth.train_writers") synth.train_writers = i();
    else if (key == "synth.genuine") synth.genuine = i();
    else if (key == "synth.forged") synth.forged = i();
    else if (key == "run.seed") {
      const auto v = text::parse_int(value, key);
      if (v < 0) throw ConfigError(key + ": must be >= 0");
      seed = static_cast<std::uint64_t>(v);
    } else if (key == "run.threads") threads = i();
    else if (key == "run.output_dir") output_dir = std::string(text::trim(value));
    else throw ConfigError("unknown config key '" + key + "'");
  }

  /// Range checks across all sections; call after every source is applied.
  void validate() {
    train.seed = seed;
    train.threads = threads;
    model.validate();
    train.validate();
    if (train_writers < 1) throw ConfigError("data.train_writers must be >= 1");
    if (pair_cap < 0) throw ConfigError("eval.pair_cap must be >= 0");
    if (histogram_bins < 1) throw ConfigError("eval.histogram_bins must be >= 1");
    if (synth.writers < 2) throw ConfigError("synth.writers must be >= 2");
    if (synth.genuine < 1 || synth.forged < 1) throw ConfigError("synth.genuine and synth.forged must be >= 1");
    if (synth.train_writers < 1 || synth.train_writers >= synth.writers) {
      throw ConfigError("synth.train_writers must be in [1, synth.writers)");
    }
    if (output_dir.empty()) throw ConfigError("run.output_dir must not be empty");
  }

  /// INI text that parse_config_text() reads back to the same config.
  std::string to_ini() const {
    std::ostringstream os;
    std::string section;
    for (const auto& [k, v] : entries()) {
      const auto dot = k.find('.');
      const std::string s = k.substr(0, dot);
      if (s != section) {
        os << (section.empty() ? "" : "\n") << "[" << s << "]\n";
        section = s;
      }
      os << k.substr(dot + 1) << " = " << v << "\n";
    }
    return os.str();
  }
};

/// Applies "key = value" lines under "[section]" headers. '#' and ';'
/// start comments; a key may also be written fully qualified outside any
/// section.
inline void apply_config_text(RunConfig& config, const std::string& body, const std::string& origin) {
  std::istringstream in(body);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = text::trim(line);
    if (t.empty() || t.front() == '#' || t.front() == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
      section = std::string(text::trim(t.substr(1, t.size() - 2)));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string name(text::trim(t.substr(0, eq)));
    const std::string key = section.empty() ? name : section + "." + name;
    config.apply(key, text::trim(t.substr(eq + 1)));
  }
}

inline RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  RunConfig c;
  apply_config_text(c, ss.str(), path);
  return c;
}

}  // namespace sigscat
