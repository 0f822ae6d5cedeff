#include "liquiform/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include "liquiform/error.hpp"
#include "liquiform/io.hpp"
#include "liquiform/parallel.hpp"
#include "liquiform/rng.hpp"
#include "liquiform/warp.hpp"

namespace liquiform {

namespace fs = std::filesystem;

std::string to_string(Split split) { return split == Split::train ? "train" : "test"; }

Split parse_split(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "test") return Split::test;
  throw ContractError("split must be 'train' or 'test', got '" + text + "'");
}

std::string category_for_k(double k) {
  for (std::size_t i = 0; i < kDefaultKs.size(); ++i) {
    if (k == kDefaultKs[i]) return "S" + std::to_string(i + 1);
  }
  return "S0";
}

std::size_t DatasetManifest::count(Split s) const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [s](const PairRecord& r) { return r.split == s; }));
}

namespace {

std::string format_k(double k) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), k);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

}  // namespace

std::string format_manifest(const DatasetManifest& manifest) {
  std::string out = "dfd-manifest v1 seed=" + std::to_string(manifest.seed) + "\n";
  for (const PairRecord& r : manifest.records) {
    out += r.distorted_path + "\t" + r.original_path + "\t" + format_k(r.k) + "\t" + r.category + "\t" +
           to_string(r.split) + "\n";
  }
  return out;
}

DatasetManifest parse_manifest(const std::string& text, const fs::path& base_dir) {
  DatasetManifest m;
  m.base_dir = base_dir;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty manifest");
  const std::string prefix = "dfd-manifest v1 seed=";
  if (line.rfind(prefix, 0) != 0) throw FormatError("manifest header must start with '" + prefix + "'");
  {
    const std::string seed = line.substr(prefix.size());
    auto res = std::from_chars(seed.data(), seed.data() + seed.size(), m.seed);
    if (res.ec != std::errc() || res.ptr != seed.data() + seed.size()) {
      throw FormatError("bad manifest seed '" + seed + "'");
    }
  }
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    const std::string where = "manifest line " + std::to_string(line_no);
    if (f.size() != 5) throw FormatError(where + ": expected 5 tab-separated fields");
    PairRecord r;
    r.distorted_path = f[0];
    r.original_path = f[1];
    auto res = std::from_chars(f[2].data(), f[2].data() + f[2].size(), r.k);
    if (res.ec != std::errc() || res.ptr != f[2].data() + f[2].size() || !(r.k > 0.0)) {
      throw FormatError(where + ": bad k '" + f[2] + "'");
    }
    r.category = f[3];
    if (r.category != category_for_k(r.k)) {
      throw FormatError(where + ": category " + r.category + " does not match k=" + f[2]);
    }
    try {
      r.split = parse_split(f[4]);
    } catch (const ContractError&) {
      throw FormatError(where + ": bad split '" + f[4] + "'");
    }
    m.records.push_back(std::move(r));
  }
  return m;
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
  write_file_atomic(path, format_manifest(manifest));
}

DatasetManifest read_manifest(const fs::path& path) {
  return parse_manifest(read_file(path), path.parent_path());
}

DatasetManifest generate(const fs::path& src_dir, const fs::path& out_dir, const GenerateOptions& options,
                         const std::function<void(const std::string&)>& warn) {
  if (options.ks.empty()) throw ContractError("k list must not be empty");
  for (double k : options.ks) {
    if (!(k > 0.0)) throw ContractError("every k must be positive, got " + format_k(k));
  }
  if (options.height < 2 || options.width < 2) throw ContractError("output size must be at least 2x2");
  std::error_code ec;
  if (!fs::is_directory(src_dir, ec)) throw IoError("source directory not found: " + src_dir.string());

  std::vector<fs::path> sources;
  for (const auto& entry : fs::directory_iterator(src_dir)) {
    if (entry.is_regular_file()) sources.push_back(entry.path());
  }
  std::sort(sources.begin(), sources.end());

  struct Item {
    std::vector<PairRecord> records;
    std::string warning;
  };
  std::vector<Item> items(sources.size());
  parallel_for(sources.size(), [&](std::size_t i) {
    const fs::path& src = sources[i];
    Image img;
    try {
      img = read_image(src);
    } catch (const std::exception& e) {
      items[i].warning = "skipping " + src.string() + ": " + e.what();
      return;
    }
    // Quantize the resized original first so each pair derives from the exact
    // pixels stored on disk.
    const Image original =
        decode_png(encode_png(resize_bilinear(to_rgb(img), options.height, options.width)));
    const std::string stem = src.stem().string();
    const std::string original_rel = "original/" + stem + ".png";
    write_image(out_dir / original_rel, original);

    std::vector<double> ks;
    if (options.all_k) {
      ks = options.ks;
    } else {
      Rng rng(mix_seed(options.seed, fnv1a(src.filename().string())));
      ks.push_back(options.ks[static_cast<std::size_t>(rng.below(options.ks.size()))]);
    }
    for (double k : ks) {
      WarpSpec spec;
      spec.k = k;
      const std::string distorted_rel = "distorted/" + stem + "_k" + format_k(k) + ".png";
      write_image(out_dir / distorted_rel, distort(original, spec));
      items[i].records.push_back({distorted_rel, original_rel, k, category_for_k(k), Split::train});
    }
  });

  DatasetManifest manifest;
  manifest.seed = options.seed;
  manifest.base_dir = out_dir;
  for (auto& item : items) {
    if (!item.warning.empty() && warn) warn(item.warning);
    for (auto& r : item.records) manifest.records.push_back(std::move(r));
  }
  if (manifest.records.empty()) throw IoError("no decodable images in " + src_dir.string());
  if (options.test_fraction > 0.0) manifest = split(manifest, options.test_fraction, options.seed);
  write_manifest(out_dir / kManifestFileName, manifest);
  return manifest;
}

DatasetManifest split(const DatasetManifest& manifest, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ContractError("test fraction must lie strictly between 0 and 1");
  }
  std::set<std::string> originals;
  for (const auto& r : manifest.records) originals.insert(r.original_path);
  const std::size_t n = originals.size();
  if (n < 2) throw ContractError("splitting needs at least 2 distinct originals, found " + std::to_string(n));
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  if (n_test == 0 || n_test == n) {
    throw ContractError("test fraction " + format_k(test_fraction) + " of " + std::to_string(n) +
                        " originals leaves an empty split");
  }
  std::vector<std::pair<std::uint64_t, std::string>> keyed;
  for (const auto& o : originals) keyed.emplace_back(mix_seed(seed, fnv1a(o)), o);
  std::sort(keyed.begin(), keyed.end());
  std::set<std::string> test;
  for (std::size_t i = 0; i < n_test; ++i) test.insert(keyed[i].second);

  DatasetManifest out = manifest;
  for (auto& r : out.records) r.split = test.count(r.original_path) ? Split::test : Split::train;
  return out;
}

namespace {

struct Rgb {
  double r, g, b;
};

Rgb lerp(Rgb a, Rgb b, double t) { return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t}; }

// Anti-aliased coverage of an axis-aligned ellipse, edges about one pixel wide.
double ellipse_cover(double x, double y, double cx, double cy, double rx, double ry, double pixel) {
  const double q = std::sqrt(((x - cx) / rx) * ((x - cx) / rx) + ((y - cy) / ry) * ((y - cy) / ry));
  const double dist = (q - 1.0) * std::min(rx, ry) / pixel;
  return std::clamp(0.5 - dist, 0.0, 1.0);
}

}  // namespace

Image synthetic_face(int size, std::uint64_t seed) {
  Rng rng(seed);
  auto u = [&](double lo, double hi) { return rng.uniform(lo, hi); };
  const Rgb bg_top{u(0.1, 0.9), u(0.1, 0.9), u(0.1, 0.9)};
  const Rgb bg_bottom{u(0.1, 0.9), u(0.1, 0.9), u(0.1, 0.9)};
  const double stripe_freq = u(2.0, 6.0), stripe_amp = u(0.0, 0.08), stripe_phase = u(0.0, 6.283);
  const double hx = 0.5 + u(-0.03, 0.03), hy = 0.52 + u(-0.03, 0.03);
  const double ha = u(0.25, 0.31), hb = u(0.33, 0.40);
  const double skin_r = u(0.55, 0.95);
  const Rgb skin{skin_r, skin_r * u(0.68, 0.85), skin_r * u(0.5, 0.72)};
  const Rgb hair{u(0.03, 0.45), u(0.02, 0.3), u(0.0, 0.2)};
  const double hair_drop = u(0.08, 0.16);
  const Rgb eye_color{u(0.05, 0.35), u(0.1, 0.45), u(0.1, 0.5)};
  const double eye_dx = u(0.095, 0.125), eye_dy = u(0.04, 0.08);
  const double mouth_w = u(0.06, 0.11), mouth_y = u(0.14, 0.2);
  const Rgb lips{u(0.6, 0.85), u(0.15, 0.35), u(0.2, 0.35)};
  const Rgb shirt{u(0.05, 0.95), u(0.05, 0.95), u(0.05, 0.95)};

  Image img(size, size, 3);
  const double pixel = 1.0 / size;
  for (int py = 0; py < size; ++py) {
    for (int px = 0; px < size; ++px) {
      const double x = (px + 0.5) * pixel, y = (py + 0.5) * pixel;
      Rgb c = lerp(bg_top, bg_bottom, y);
      const double stripe = stripe_amp * std::sin(2 * 3.14159265358979 * stripe_freq * (x + 0.5 * y) + stripe_phase);
      c = {c.r + stripe, c.g + stripe, c.b + stripe};
      auto over = [&](Rgb col, double a) { c = lerp(c, col, a); };

      over(shirt, ellipse_cover(x, y, hx, hy + hb + 0.28, ha * 1.6, 0.36, pixel));
      over(lerp(skin, Rgb{0, 0, 0}, 0.15), ellipse_cover(x, y, hx, hy + hb * 0.9, ha * 0.42, 0.14, pixel));
      over(hair, ellipse_cover(x, y, hx, hy - hair_drop * 0.5, ha * 1.12, hb * 1.02, pixel));
      const double head = ellipse_cover(x, y, hx, hy + 0.02, ha, hb * 0.94, pixel);
      const double shade = 1.0 - 0.28 * std::pow((x - hx) / ha, 2.0);
      over(Rgb{skin.r * shade, skin.g * shade, skin.b * shade}, head);
      // Fringe across the forehead.
      over(hair, head * ellipse_cover(x, y, hx, hy - hb * 0.78, ha * 1.05, hair_drop + 0.1, pixel));
      for (int side : {-1, 1}) {
        const double ex = hx + side * eye_dx, ey = hy - eye_dy;
        over(hair, ellipse_cover(x, y, ex, ey - 0.05, 0.055, 0.012, pixel));
        over(Rgb{0.95, 0.95, 0.95}, ellipse_cover(x, y, ex, ey, 0.05, 0.026, pixel));
        over(eye_color, ellipse_cover(x, y, ex, ey, 0.022, 0.022, pixel));
        over(Rgb{0.02, 0.02, 0.02}, ellipse_cover(x, y, ex, ey, 0.01, 0.01, pixel));
      }
      over(lerp(skin, Rgb{0, 0, 0}, 0.2), ellipse_cover(x, y, hx, hy + 0.06, 0.022, 0.055, pixel) * 0.6);
      over(lips, ellipse_cover(x, y, hx, hy + mouth_y, mouth_w, 0.024, pixel));
      img.at(py, px, 0) = static_cast<float>(std::clamp(c.r, 0.0, 1.0));
      img.at(py, px, 1) = static_cast<float>(std::clamp(c.g, 0.0, 1.0));
      img.at(py, px, 2) = static_cast<float>(std::clamp(c.b, 0.0, 1.0));
    }
  }
  return img;
}

void make_source_images(const fs::path& dir, int count, int size, std::uint64_t seed) {
  if (count < 1) throw ContractError("source image count must be positive");
  parallel_for(static_cast<std::size_t>(count), [&](std::size_t i) {
    char name[32];
    std::snprintf(name, sizeof(name), "face_%04zu.png", i);
    write_image(dir / name, synthetic_face(size, mix_seed(seed, i)));
  });
}

const std::pair<Image, Image>& PairCache::get(std::size_t record) {
  auto it = pairs_.find(record);
  if (it != pairs_.end()) return it->second;
  if (record >= manifest_.records.size()) throw ContractError("record index out of range");
  const PairRecord& r = manifest_.records[record];
  auto load = [&](const std::string& rel) {
    const fs::path p = manifest_.resolve(rel);
    try {
      return to_rgb(read_image(p));
    } catch (const IoError& e) {
      throw IoError("cannot load dataset image " + p.string() + ": " + e.what());
    } catch (const std::exception& e) {
      throw FormatError("cannot decode dataset image " + p.string() + ": " + e.what());
    }
  };
  Image distorted = load(r.distorted_path);
  Image original = load(r.original_path);
  if (!distorted.same_shape(original)) {
    throw FormatError("pair " + r.distorted_path + " / " + r.original_path + " differs in size");
  }
  return pairs_.emplace(record, std::make_pair(std::move(distorted), std::move(original))).first->second;
}

Batch make_batch(PairCache& cache, const std::vector<std::size_t>& records) {
  std::vector<Image> distorted, original;
  Batch b;
  for (std::size_t idx : records) {
    const auto& p = cache.get(idx);
    if (!distorted.empty() && !p.first.same_shape(distorted.front())) {
      throw FormatError("dataset image " + cache.manifest().records[idx].distorted_path +
                        " differs in size from the rest of its batch");
    }
    distorted.push_back(p.first);
    original.push_back(p.second);
    b.ks.push_back(cache.manifest().records[idx].k);
  }
  b.distorted = images_to_tensor<float>(distorted);
  b.original = images_to_tensor<float>(original);
  b.records = records;
  return b;
}

BatchIterator::BatchIterator(std::shared_ptr<PairCache> cache, Split split, int batch_size,
                             std::uint64_t shuffle_seed, bool shuffle)
    : cache_(std::move(cache)), seed_(shuffle_seed), shuffle_(shuffle) {
  if (batch_size < 1) throw ContractError("batch size must be at least 1");
  batch_size_ = static_cast<std::size_t>(batch_size);
  const auto& records = cache_->manifest().records;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].split == split) indices_.push_back(i);
  }
  start_epoch(0);
}

std::size_t BatchIterator::batches_per_epoch() const {
  return (indices_.size() + batch_size_ - 1) / batch_size_;
}

std::vector<std::size_t> BatchIterator::epoch_order(int epoch) const {
  std::vector<std::size_t> order = indices_;
  if (shuffle_) {
    Rng rng(mix_seed(seed_, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(std::span<std::size_t>(order));
  }
  return order;
}

void BatchIterator::start_epoch(int epoch) {
  order_ = epoch_order(epoch);
  cursor_ = 0;
}

bool BatchIterator::next(Batch& batch) {
  if (cursor_ >= order_.size()) return false;
  const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
  batch = make_batch(*cache_, std::vector<std::size_t>(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                                       order_.begin() + static_cast<std::ptrdiff_t>(end)));
  cursor_ = end;
  return true;
}

}  // namespace liquiform
