#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sigscat/config.hpp"
#include "sigscat/dataset.hpp"
#include "sigscat/evaluation.hpp"
#include "sigscat/image_io.hpp"
#include "sigscat/model.hpp"
#include "sigscat/serialize.hpp"
#include "sigscat/synth.hpp"
#include "sigscat/training.hpp"

namespace sigscat::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitForged = 1;
inline constexpr int kExitError = 2;

/// Tracks what a command writes so a failed run leaves nothing behind.
class OutputGuard {
 public:
  explicit OutputGuard(fs::path dir) : dir_(std::move(dir)) {
    if (!fs::exists(dir_)) {
      fs::create_directories(dir_);
      created_dir_ = true;
    } else if (!fs::is_directory(dir_)) {
      throw IoError("output path '" + dir_.string() + "' exists and is not a directory");
    }
  }
  OutputGuard(const OutputGuard&) = delete;
  OutputGuard& operator=(const OutputGuard&) = delete;
  ~OutputGuard() {
    if (committed_) return;
    std::error_code ec;
    if (created_dir_) {
      fs::remove_all(dir_, ec);
      return;
    }
    for (auto it = files_.rbegin(); it != files_.rend(); ++it) fs::remove(*it, ec);
  }

  /// Path of a new output, registered for cleanup.
  fs::path file(const fs::path& relative) {
    fs::path p = dir_ / relative;
    if (p.has_parent_path()) {
      // Record directories we create so they are removed too.
      std::vector<fs::path> fresh;
      for (fs::path q = p.parent_path(); !fs::exists(q); q = q.parent_path()) fresh.push_back(q);
      fs::create_directories(p.parent_path());
      files_.insert(files_.end(), fresh.rbegin(), fresh.rend());
    }
    files_.push_back(p);
    return p;
  }
  const fs::path& dir() const noexcept { return dir_; }
  void commit() noexcept { committed_ = true; }

 private:
  fs::path dir_;
  bool created_dir_ = false;
  bool committed_ = false;
  std::vector<fs::path> files_;
};

inline void write_text(const fs::path& p, const std::string& body) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + p.string() + "'");
  out << body;
  if (!out) throw IoError("write failed for '" + p.string() + "'");
}

/// Flags shared by every command. Values stay as text so they go through
/// the same key parser as the config file.
struct Overrides {
  std::string config_file;
  std::vector<std::string> sets;
  std::string epochs, seed, threads, lr, batch, output, data, layout;
  std::string weights, threshold, summary;
  std::vector<std::string> images;
};

inline RunConfig resolve(const Overrides& o) {
  RunConfig c = o.config_file.empty() ? RunConfig{} : load_config_file(o.config_file);
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    c.apply(std::string(text::trim(std::string_view(s).substr(0, eq))), std::string_view(s).substr(eq + 1));
  }
  const std::pair<const std::string*, const char*> flags[] = {
      {&o.epochs, "train.epochs"},    {&o.seed, "run.seed"},         {&o.threads, "run.threads"},
      {&o.lr, "train.learning_rate"}, {&o.batch, "train.batch_size"}, {&o.output, "run.output_dir"},
      {&o.data, "data.root"},         {&o.layout, "data.layout"},
  };
  for (const auto& [value, key] : flags) {
    if (!value->empty()) c.apply(key, *value);
  }
  c.validate();
  return c;
}

inline void echo_config(OutputGuard& guard, const RunConfig& c) {
  write_text(guard.file("config.resolved.ini"), c.to_ini());
}

inline SignatureCatalog load_split_catalog(const RunConfig& c, std::ostream& out) {
  if (c.data_root.empty()) throw ConfigError("data.root is required (use --data)");
  auto idx = index_dataset(c.data_root, c.layout, c.threads);
  for (const auto& n : idx.notes) out << n << "\n";
  if (!idx.skipped.empty()) out << "skipped " << idx.skipped.size() << " files\n";
  return writer_disjoint_split(std::move(idx.catalog), static_cast<std::size_t>(c.train_writers), c.seed);
}

inline std::string skip_report(const std::vector<SkippedFile>& skipped) {
  std::string s;
  for (const auto& f : skipped) s += f.path + "\t" + f.reason + "\n";
  return s;
}

inline int cmd_synth(const RunConfig& c, std::ostream& out) {
  OutputGuard guard(c.output_dir);
  echo_config(guard, c);
  auto catalog = synthesize_dataset(c.synth.writers, c.synth.genuine, c.synth.forged, c.seed);
  catalog = writer_disjoint_split(std::move(catalog), static_cast<std::size_t>(c.synth.train_writers), c.seed);
  std::string manifest = "path\twriter\tlabel\tsplit\n";
  for (const auto& im : catalog.images()) {
    const std::string split = to_string(catalog.split_of(im.writer_id));
    const std::string name = fs::path(im.id).filename().string();
    const fs::path rel = fs::path(split) / im.writer_id / to_string(im.label) / (name + ".png");
    write_png_gray(guard.file(rel).string(), *im.pixels);
    manifest += rel.generic_string() + "\t" + split + "/" + im.writer_id + "\t" + to_string(im.label) +
                "\t" + split + "\n";
  }
  write_text(guard.file("manifest.tsv"), manifest);
  guard.commit();
  out << "wrote " << catalog.images().size() << " images for " << catalog.writers().size()
      << " writers to " << c.output_dir << " (layout sigcomp-dutch)\n";
  return kExitOk;
}

inline int cmd_train(const RunConfig& c, std::ostream& out) {
  OutputGuard guard(c.output_dir);
  echo_config(guard, c);
  if (c.data_root.empty()) throw ConfigError("data.root is required (use --data)");
  auto idx = index_dataset(c.data_root, c.layout, c.threads);
  for (const auto& n : idx.notes) out << n << "\n";
  if (!idx.skipped.empty()) write_text(guard.file("skipped.tsv"), skip_report(idx.skipped));
  const auto catalog =
      writer_disjoint_split(std::move(idx.catalog), static_cast<std::size_t>(c.train_writers), c.seed);
  write_text(guard.file("manifest.tsv"), catalog.manifest());
  out << "training on " << catalog.writers_in(Split::train).size() << " writers\n" << std::flush;
  auto result = train(catalog, c.model, c.train, [&](const EpochStats& e) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "epoch %d loss %.6f active %.3f (%.1fs)\n", e.epoch, e.mean_loss,
                  e.active_fraction, e.seconds);
    out << buf << std::flush;
  });
  const fs::path weights = guard.file("weights.ssnw");
  save_weights(weights.string(), result.weights);
  result.report.checkpoint_path = weights.string();
  write_text(guard.file("train_log.tsv"), result.report.log());
  guard.commit();
  out << "weights: " << weights.string() << "\n";
  return kExitOk;
}

inline int cmd_evaluate(RunConfig c, const Overrides& o, std::ostream& out) {
  if (o.weights.empty()) throw ConfigError("--weights is required");
  const auto weights = load_weights(o.weights);
  c.model = weights.config();
  OutputGuard guard(c.output_dir);
  echo_config(guard, c);
  const auto catalog = load_split_catalog(c, out);
  std::optional<std::size_t> cap;
  if (c.pair_cap > 0) cap = static_cast<std::size_t>(c.pair_cap);
  const auto pairs = generate_eval_pairs(catalog, Split::test, cap, c.seed);
  for (const auto& w : pairs.warnings) out << "warning: " << w << "\n";
  const FilterBank bank(c.model.scattering);
  const auto scored = score_pairs(catalog, pairs.pairs, weights, bank, c.threads);
  const auto report = evaluate_scores(scored, c.histogram_bins);
  for (const auto& p : write_report(report, guard.dir().string())) guard.file(fs::path(p).filename());
  std::string s = "first,second,label,score\n";
  for (const auto& sp : scored) {
    s += catalog.image(sp.pair.first).id + "," + catalog.image(sp.pair.second).id + "," +
         to_string(sp.pair.label) + "," + detail::num(sp.score) + "\n";
  }
  write_text(guard.file("scores.csv"), s);
  guard.commit();
  out << report.summary().dump() << "\n";
  return kExitOk;
}

inline double threshold_from_summary(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open summary '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
    return j.at("eer_threshold").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("summary '" + path.string() + "' has no usable eer_threshold: " + e.what());
  }
}

inline int cmd_verify(const Overrides& o, std::ostream& out) {
  if (o.weights.empty()) throw ConfigError("--weights is required");
  if (o.images.size() != 2) throw ConfigError("verify takes exactly two image paths");
  double threshold;
  if (!o.threshold.empty()) {
    threshold = text::parse_double(o.threshold, "--threshold");
  } else {
    const fs::path summary =
        o.summary.empty() ? fs::path(o.weights).parent_path() / "summary.json" : fs::path(o.summary);
    if (!fs::exists(summary)) {
      throw ConfigError("no threshold: pass --threshold or --summary (looked for " + summary.string() + ")");
    }
    threshold = std::clamp(threshold_from_summary(summary), 0.0, 1.0);
  }
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("--threshold must be in [0, 1]");
  const auto weights = load_weights(o.weights);
  const FilterBank bank(weights.config().scattering);
  const auto v = verify(o.images[0], o.images[1], weights, bank, threshold);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s %.6f\n", v.genuine ? "genuine" : "forged", v.score);
  out << buf;
  return v.genuine ? kExitOk : kExitForged;
}

inline int cmd_embed(const RunConfig& c, const Overrides& o, std::ostream& out) {
  if (o.weights.empty()) throw ConfigError("--weights is required");
  if (o.images.empty()) throw ConfigError("embed needs at least one image path");
  const auto weights = load_weights(o.weights);
  const auto& sc = weights.config().scattering;
  const FilterBank bank(sc);
  std::string csv = "source";
  for (int i = 0; i < weights.config().embedding_dim; ++i) csv += ",e" + std::to_string(i);
  csv += "\n";
  for (const auto& path : o.images) {
    const auto img = load_image(path, static_cast<std::size_t>(sc.input_height),
                                static_cast<std::size_t>(sc.input_width));
    const auto e = embed(img, weights, bank, path);
    csv += path;
    for (float v : e.values) csv += "," + detail::num(v);
    csv += "\n";
  }
  if (o.output.empty()) {
    out << csv;
    return kExitOk;
  }
  RunConfig echoed = c;
  echoed.model = weights.config();
  OutputGuard guard(c.output_dir);
  echo_config(guard, echoed);
  write_text(guard.file("embeddings.csv"), csv);
  guard.commit();
  out << "wrote " << o.images.size() << " embeddings to " << (guard.dir() / "embeddings.csv").string() << "\n";
  return kExitOk;
}

inline int cmd_params(const RunConfig& c, const Overrides& o, std::ostream& out) {
  ModelConfig mc = c.model;
  std::optional<ModelWeights<float>> loaded;
  if (!o.weights.empty()) {
    loaded.emplace(load_weights(o.weights));
    mc = loaded->config();
  }
  const auto plan = layer_plan(mc);
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-8s %-18s %-14s %10s %8s %10s\n", "layer", "weight", "output",
                "weights", "biases", "total");
  out << buf;
  std::size_t total = 0;
  for (const auto& l : plan) {
    const std::size_t w = element_count(l.weight_shape), b = element_count(l.bias_shape);
    std::snprintf(buf, sizeof buf, "%-8s %-18s %-14s %10zu %8zu %10zu\n", l.name.c_str(),
                  to_string(l.weight_shape).c_str(), to_string(l.output_shape).c_str(), w, b, w + b);
    out << buf;
    total += w + b;
  }
  if (loaded && count_parameters(*loaded) != total) {
    throw FormatError("weights file holds " + std::to_string(count_parameters(*loaded)) +
                      " parameters, its config implies " + std::to_string(total));
  }
  out << "total " << total << "\n";
  return kExitOk;
}

/// Entry point shared by the executable and the in-process tests.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Scattering + Siamese signature verification"};
  app.require_subcommand(1);
  Overrides o;
  const char* names[] = {"synth", "train", "evaluate", "verify", "embed", "params"};
  const char* help[] = {"generate a synthetic signature dataset",
                        "train an embedding model",
                        "score the test split and write curves",
                        "compare two signature images",
                        "write embeddings of images as CSV",
                        "print the per-layer parameter table"};
  for (int i = 0; i < 6; ++i) {
    auto* sub = app.add_subcommand(names[i], help[i]);
    sub->add_option("--config", o.config_file, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--set", o.sets, "override one config key (key=value)");
    sub->add_option("--epochs", o.epochs, "train.epochs");
    sub->add_option("--seed", o.seed, "run.seed");
    sub->add_option("--threads", o.threads, "run.threads");
    sub->add_option("--lr", o.lr, "train.learning_rate");
    sub->add_option("--batch-size", o.batch, "train.batch_size");
    sub->add_option("-o,--output", o.output, "run.output_dir");
    sub->add_option("--data", o.data, "data.root");
    sub->add_option("--layout", o.layout, "data.layout (cedar | sigcomp-dutch)");
    sub->add_option("--weights", o.weights, "weights file");
    if (std::string(names[i]) == "verify") {
      sub->add_option("--threshold", o.threshold, "accept when score <= threshold");
      sub->add_option("--summary", o.summary, "summary.json holding eer_threshold");
    }
    if (std::string(names[i]) == "verify" || std::string(names[i]) == "embed") {
      sub->add_option("images", o.images, "image paths");
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitError;
  }
  try {
    RunConfig c = resolve(o);
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "synth") return cmd_synth(c, out);
    if (cmd == "train") return cmd_train(c, out);
    if (cmd == "evaluate") return cmd_evaluate(c, o, out);
    if (cmd == "verify") return cmd_verify(o, out);
    if (cmd == "embed") return cmd_embed(c, o, out);
    return cmd_params(c, o, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

}  // namespace sigscat::cli
