#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "liquiform/image.hpp"
#include "liquiform/tensor.hpp"

namespace liquiform {

enum class Split { train, test };

std::string to_string(Split split);
Split parse_split(const std::string& text);

// Distortion grid used throughout: k = 0.5, 0.8 (convex) and 1.5, 2.7 (concave).
inline const std::vector<double> kDefaultKs = {0.5, 0.8, 1.5, 2.7};

// S1..S4 for the four grid values, S0 for anything else (those pairs only
// count towards the overall column).
std::string category_for_k(double k);

struct PairRecord {
  std::string distorted_path;  // relative to the manifest directory
  std::string original_path;
  double k = 1.0;
  std::string category;
  Split split = Split::train;
  friend bool operator==(const PairRecord&, const PairRecord&) = default;
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  std::vector<PairRecord> records;
  std::filesystem::path base_dir;  // directory the record paths are relative to

  std::filesystem::path resolve(const std::string& relative) const { return base_dir / relative; }
  std::size_t count(Split split) const;
};

inline constexpr const char* kManifestFileName = "manifest.tsv";

std::string format_manifest(const DatasetManifest& manifest);
// Throws FormatError on a bad header, malformed record or a category label
// that disagrees with its k.
DatasetManifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

struct GenerateOptions {
  std::vector<double> ks = kDefaultKs;
  int height = 224;
  int width = 224;
  std::uint64_t seed = 0;
  bool all_k = false;          // every k for every source instead of one drawn k
  double test_fraction = 0.0;  // 0 leaves every pair in the training split
};

// Resizes every decodable image in src_dir, distorts it and writes
// out_dir/original/*.png, out_dir/distorted/*.png and out_dir/manifest.tsv.
// Undecodable files are reported through warn and skipped.
DatasetManifest generate(const std::filesystem::path& src_dir, const std::filesystem::path& out_dir,
                         const GenerateOptions& options,
                         const std::function<void(const std::string&)>& warn = {});

// Assigns whole originals to the test split by seeded hashing; round(fraction
// * originals) of them go to test. Throws ContractError when either split
// would be empty or fewer than two originals exist.
DatasetManifest split(const DatasetManifest& manifest, double test_fraction, std::uint64_t seed);

// Synthetic face-like portraits (background, head, hair, eyes, mouth) used as
// a self-contained source corpus. Writes face_0000.png, ... into dir.
void make_source_images(const std::filesystem::path& dir, int count, int size, std::uint64_t seed);
Image synthetic_face(int size, std::uint64_t seed);

struct Batch {
  Tensor<float> distorted;  // [N, 3, H, W]
  Tensor<float> original;
  std::vector<double> ks;
  std::vector<std::size_t> records;  // indices into the manifest
};

// Decoded image pairs, loaded on first use and shared by iterators.
class PairCache {
 public:
  explicit PairCache(const DatasetManifest& manifest) : manifest_(manifest) {}
  // Throws IoError/FormatError naming the offending path.
  const std::pair<Image, Image>& get(std::size_t record);
  const DatasetManifest& manifest() const { return manifest_; }

 private:
  DatasetManifest manifest_;
  std::map<std::size_t, std::pair<Image, Image>> pairs_;
};

// Mini-batches over one split. The visiting order of an epoch is a pure
// function of (shuffle_seed, epoch); the last batch may be short.
class BatchIterator {
 public:
  BatchIterator(std::shared_ptr<PairCache> cache, Split split, int batch_size, std::uint64_t shuffle_seed,
                bool shuffle = true);

  void start_epoch(int epoch);
  bool next(Batch& batch);

  std::size_t size() const { return indices_.size(); }
  std::size_t batches_per_epoch() const;
  // Indices visited in the given epoch, in order.
  std::vector<std::size_t> epoch_order(int epoch) const;

 private:
  std::shared_ptr<PairCache> cache_;
  std::vector<std::size_t> indices_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  bool shuffle_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

Batch make_batch(PairCache& cache, const std::vector<std::size_t>& records);

}  // namespace liquiform
