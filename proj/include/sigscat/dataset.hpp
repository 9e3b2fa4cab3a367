#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sigscat/errors.hpp"
#include "sigscat/image_io.hpp"
#include "sigscat/parallel.hpp"
#include "sigscat/random.hpp"
#include "sigscat/tensor.hpp"

namespace sigscat {

namespace fs = std::filesystem;

enum class Label { genuine, forged };
enum class Split { unassigned, train, test };
enum class Layout { cedar, sigcomp_dutch };

inline std::string to_string(Label l) { return l == Label::genuine ? "genuine" : "forged"; }
inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::test: return "test";
    default: return "unassigned";
  }
}
inline std::string to_string(Layout l) { return l == Layout::cedar ? "cedar" : "sigcomp-dutch"; }
inline Layout parse_layout(std::string_view s) {
  if (s == "cedar") return Layout::cedar;
  if (s == "sigcomp-dutch") return Layout::sigcomp_dutch;
  throw ConfigError("layout must be 'cedar' or 'sigcomp-dutch', got '" + std::string(s) + "'");
}

/// One ingested signature: 180x300 grayscale pixels in [0, 1].
struct SignatureImage {
  std::string id;            ///< unique within the catalog
  std::string writer_id;
  Label label = Label::genuine;
  std::string source_path;   ///< empty for generated images
  std::shared_ptr<const Tensor<float>> pixels;
};

/// Index of an image inside its catalog.
using ImageRef = std::size_t;

struct WriterEntry {
  std::vector<ImageRef> genuine;
  std::vector<ImageRef> forged;
};

/// Writer-indexed inventory of signatures with a writer-level split.
class SignatureCatalog {
 public:
  SignatureCatalog() = default;

  /// Images are kept in the given order; each must name its writer.
  SignatureCatalog(std::vector<SignatureImage> images, std::string provenance)
      : images_(std::move(images)), provenance_(std::move(provenance)) {
    std::set<std::string> ids;
    for (ImageRef i = 0; i < images_.size(); ++i) {
      const auto& im = images_[i];
      if (!ids.insert(im.id).second) throw Error("duplicate image id '" + im.id + "'");
      auto& w = writers_[im.writer_id];
      (im.label == Label::genuine ? w.genuine : w.forged).push_back(i);
      split_.emplace(im.writer_id, Split::unassigned);
    }
  }

  const std::vector<SignatureImage>& images() const noexcept { return images_; }
  const SignatureImage& image(ImageRef r) const { return images_.at(r); }
  const std::map<std::string, WriterEntry>& writers() const noexcept { return writers_; }
  const WriterEntry& writer(const std::string& id) const {
    auto it = writers_.find(id);
    if (it == writers_.end()) throw Error("unknown writer '" + id + "'");
    return it->second;
  }
  const std::string& provenance() const noexcept { return provenance_; }
  bool empty() const noexcept { return images_.empty(); }

  Split split_of(const std::string& writer) const { return split_.at(writer); }
  void set_split(const std::string& writer, Split s) {
    if (!writers_.count(writer)) throw Error("unknown writer '" + writer + "'");
    split_[writer] = s;
  }
  /// True when the split came with the data (folder-based layouts).
  bool split_is_fixed() const noexcept { return fixed_split_; }
  void mark_split_fixed() { fixed_split_ = true; }

  std::vector<std::string> writers_in(Split s) const {
    std::vector<std::string> out;
    for (const auto& [w, sp] : split_) {
      if (sp == s) out.push_back(w);
    }
    return out;
  }

  /// One tab-separated record per image: path, writer, label, split.
  std::string manifest() const {
    std::ostringstream os;
    os << "path\twriter\tlabel\tsplit\n";
    for (const auto& im : images_) {
      os << (im.source_path.empty() ? im.id : im.source_path) << '\t' << im.writer_id << '\t'
         << to_string(im.label) << '\t' << to_string(split_.at(im.writer_id)) << '\n';
    }
    return os.str();
  }

 private:
  std::vector<SignatureImage> images_;
  std::map<std::string, WriterEntry> writers_;
  std::map<std::string, Split> split_;
  std::string provenance_;
  bool fixed_split_ = false;
};

struct SkippedFile {
  std::string path;
  std::string reason;
};

struct IndexResult {
  SignatureCatalog catalog;
  std::vector<SkippedFile> skipped;
  std::vector<std::string> notes;   ///< count checks against layout expectations
};

namespace detail {

inline bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

inline std::vector<fs::path> sorted_files(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<fs::path> sorted_dirs(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct PendingImage {
  fs::path path;
  std::string writer;
  Label label;
  Split split = Split::unassigned;
};

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

// CEDAR: full_org/original_<W>_<N>.png and full_forg/forgeries_<W>_<N>.png.
inline void scan_cedar(const fs::path& root, std::vector<PendingImage>& out,
                       std::vector<SkippedFile>& skipped) {
  static const std::regex genuine_re(R"(original_(\d+)_(\d+)\.(png|jpe?g))", std::regex::icase);
  static const std::regex forged_re(R"(forgeries_(\d+)_(\d+)\.(png|jpe?g))", std::regex::icase);
  for (auto [sub, re, label] : {std::tuple{"full_org", &genuine_re, Label::genuine},
                                std::tuple{"full_forg", &forged_re, Label::forged}}) {
    for (const auto& p : sorted_files(root / sub)) {
      std::smatch m;
      const std::string name = p.filename().string();
      if (!std::regex_match(name, m, *re)) {
        skipped.push_back({p.string(), "filename does not match the CEDAR convention"});
        continue;
      }
      out.push_back({p, std::to_string(std::stoi(m[1].str())), label});
    }
  }
}

// SigComp Dutch, two accepted forms per split folder (train/, test/):
//   <split>/<writer>/{genuine,forged}/*.png
//   <split>/<...Genuine...>/<WWW>_<NN>.png and <split>/<...Forger...>/<FFFFWWW>_<NN>.png
//   (the competition's native naming: forgery prefixes carry the forger id
//   followed by the 3-digit target writer).
inline void scan_sigcomp(const fs::path& root, std::vector<PendingImage>& out,
                         std::vector<SkippedFile>& skipped) {
  static const std::regex native_genuine(R"((\d{3})_(\d+)\.(png|jpe?g))", std::regex::icase);
  static const std::regex native_forged(R"((\d{4})(\d{3})_(\d+)\.(png|jpe?g))", std::regex::icase);
  for (auto [folder, split] : {std::pair{"train", Split::train}, std::pair{"test", Split::test}}) {
    const fs::path base = root / folder;
    for (const auto& sub : sorted_dirs(base)) {
      const std::string name = lower(sub.filename().string());
      const bool native_g = name.find("genuine") != std::string::npos;
      const bool native_f = name.find("forg") != std::string::npos;
      if (native_g || native_f) {
        for (const auto& p : sorted_files(sub)) {
          if (!is_image_file(p)) continue;
          std::smatch m;
          const std::string fn = p.filename().string();
          if (native_f && std::regex_match(fn, m, native_forged)) {
            out.push_back({p, std::string(folder) + "/" + m[2].str(), Label::forged, split});
          } else if (native_g && std::regex_match(fn, m, native_genuine)) {
            out.push_back({p, std::string(folder) + "/" + m[1].str(), Label::genuine, split});
          } else {
            skipped.push_back({p.string(), "filename does not match the SigComp naming"});
          }
        }
        continue;
      }
      const std::string writer = std::string(folder) + "/" + sub.filename().string();
      for (auto [dir, label] : {std::pair{"genuine", Label::genuine}, std::pair{"forged", Label::forged}}) {
        for (const auto& p : sorted_files(sub / dir)) {
          if (!is_image_file(p)) {
            skipped.push_back({p.string(), "not a PNG/JPEG file"});
            continue;
          }
          out.push_back({p, writer, label, split});
        }
      }
    }
  }
}

}  // namespace detail

/// Builds a catalog from a dataset tree. Unparseable file names go to the
/// skip report; an empty result is an error. Images are decoded in parallel
/// but the catalog is always ordered by path.
inline IndexResult index_dataset(const std::string& root, Layout layout, int threads = 1) {
  if (!fs::is_directory(root)) throw IoError("dataset root '" + root + "' is not a directory");
  IndexResult result;
  std::vector<detail::PendingImage> pending;
  if (layout == Layout::cedar) detail::scan_cedar(root, pending, result.skipped);
  else detail::scan_sigcomp(root, pending, result.skipped);
  if (pending.empty()) {
    throw IoError("no signatures found under '" + root + "' for layout " + to_string(layout));
  }
  std::sort(pending.begin(), pending.end(),
            [](const auto& a, const auto& b) { return a.path < b.path; });

  std::vector<SignatureImage> images(pending.size());
  parallel_for(pending.size(), threads, [&](std::size_t i) {
    const auto& p = pending[i];
    auto pix = std::make_shared<Tensor<float>>(load_image(p.path.string()));
    images[i] = {fs::relative(p.path, root).generic_string(), p.writer, p.label,
                 p.path.string(), std::move(pix)};
  });
  result.catalog = SignatureCatalog(std::move(images), to_string(layout) + ":v1");
  if (layout == Layout::sigcomp_dutch) {
    for (const auto& p : pending) result.catalog.set_split(p.writer, p.split);
    result.catalog.mark_split_fixed();
  }

  const auto& writers = result.catalog.writers();
  if (layout == Layout::cedar) {
    std::size_t complete = 0;
    for (const auto& [w, e] : writers) complete += (e.genuine.size() == 24 && e.forged.size() == 24);
    result.notes.push_back("cedar: " + std::to_string(writers.size()) + " writers (expected 55), " +
                           std::to_string(complete) + " with 24 genuine + 24 forged");
  } else {
    const auto train = result.catalog.writers_in(Split::train).size();
    std::size_t meeting = 0;
    for (const auto& w : result.catalog.writers_in(Split::train)) {
      const auto& e = writers.at(w);
      meeting += (e.genuine.size() >= 24 && e.forged.size() >= 8);
    }
    result.notes.push_back("sigcomp-dutch: " + std::to_string(train) + " train writers (expected 64), " +
                           std::to_string(meeting) + " with >= 24 genuine and >= 8 forged; " +
                           std::to_string(result.catalog.writers_in(Split::test).size()) +
                           " test writers");
  }
  return result;
}

/// Seeded writer-level split: `train_writers` writers go to train, the rest
/// to test. Catalogs whose split came with the data are returned unchanged.
inline SignatureCatalog writer_disjoint_split(SignatureCatalog catalog, std::size_t train_writers,
                                              std::uint64_t seed) {
  if (catalog.split_is_fixed()) return catalog;
  std::vector<std::string> ids;
  for (const auto& [w, e] : catalog.writers()) ids.push_back(w);
  if (train_writers >= ids.size()) {
    throw ConfigError("train_writers (" + std::to_string(train_writers) +
                      ") must be smaller than the number of writers (" +
                      std::to_string(ids.size()) + ")");
  }
  Rng rng(seed);
  rng.shuffle(ids);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    catalog.set_split(ids[i], i < train_writers ? Split::train : Split::test);
  }
  return catalog;
}

enum class PairLabel { genuine_pair, forgery_pair };

inline std::string to_string(PairLabel l) {
  return l == PairLabel::genuine_pair ? "genuine" : "forgery";
}

/// Reference (always genuine) plus questioned signature.
struct EvalPair {
  ImageRef first = 0;
  ImageRef second = 0;
  PairLabel label = PairLabel::genuine_pair;
  friend bool operator==(const EvalPair&, const EvalPair&) = default;
};

struct PairSet {
  std::vector<EvalPair> pairs;
  std::vector<std::string> warnings;
};

/// Every genuine-genuine pair and every genuine-forgery pair of each writer
/// in `split`. With a cap, each writer's pairs of each type are subsampled
/// to at most `cap` with a seeded shuffle; original order is then restored.
inline PairSet generate_eval_pairs(const SignatureCatalog& catalog, Split split,
                                   std::optional<std::size_t> per_writer_cap, std::uint64_t seed) {
  const auto writers = catalog.writers_in(split);
  if (writers.empty()) throw Error("no writers in the " + to_string(split) + " split");
  PairSet out;
  Rng rng(seed);
  for (std::size_t wi = 0; wi < writers.size(); ++wi) {
    const auto& e = catalog.writer(writers[wi]);
    std::vector<EvalPair> gen, forg;
    for (std::size_t i = 0; i < e.genuine.size(); ++i) {
      for (std::size_t j = i + 1; j < e.genuine.size(); ++j) {
        gen.push_back({e.genuine[i], e.genuine[j], PairLabel::genuine_pair});
      }
      for (ImageRef f : e.forged) forg.push_back({e.genuine[i], f, PairLabel::forgery_pair});
    }
    if (e.genuine.size() < 2) {
      out.warnings.push_back("writer " + writers[wi] + " has fewer than 2 genuine signatures; no genuine pairs");
    }
    Rng wr = rng.fork(wi);
    for (auto* list : {&gen, &forg}) {
      if (per_writer_cap && list->size() > *per_writer_cap) {
        std::vector<std::size_t> idx(list->size());
        for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
        wr.shuffle(idx);
        idx.resize(*per_writer_cap);
        std::sort(idx.begin(), idx.end());
        std::vector<EvalPair> kept;
        for (auto k : idx) kept.push_back((*list)[k]);
        *list = std::move(kept);
      }
      out.pairs.insert(out.pairs.end(), list->begin(), list->end());
    }
  }
  return out;
}

}  // namespace sigscat
