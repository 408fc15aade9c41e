#include "objn/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "objn/errors.hpp"

namespace objn {

namespace fs = std::filesystem;
using json = nlohmann::json;

void SynthConfig::validate() const {
  if (num_classes < 2 || num_classes > 15)
    throw ConfigError("data: num_classes must be in [2,15], got " + std::to_string(num_classes));
  if (image_size < 16) throw ConfigError("data: image_size must be >= 16");
  if (train_images < 1 || val_images < 1) throw ConfigError("data: need at least one image per split");
  if (max_objects < 1) throw ConfigError("data: max_objects must be >= 1");
  if (!(scale_min > 0.0 && scale_min < scale_max && scale_max < 1.0))
    throw ConfigError("data: object scale range must satisfy 0 < min < max < 1");
  if (!(aspect_min > 0.0 && aspect_min < aspect_max))
    throw ConfigError("data: aspect range must satisfy 0 < min < max");
  if (clutter < 0.0 || clutter > 0.5) throw ConfigError("data: clutter density must be in [0,0.5]");
  // smallest object edge must rasterize to a few pixels, largest must fit
  const double min_edge = scale_min * image_size / std::sqrt(aspect_max);
  const double max_edge = scale_max * image_size * std::sqrt(aspect_max);
  if (min_edge < 3.0)
    throw ConfigError("data: scale_min too small, objects degenerate below 3 px");
  if (max_edge > image_size - 2.0)
    throw ConfigError("data: object scale too large to fit in the image");
}

namespace {

enum class ShapeKind { Circle, Rect, Triangle, Diamond, Cross };
enum class FillKind { Solid, Ring, Checker };

ShapeKind shape_of_class(int class_id) { return static_cast<ShapeKind>(class_id % 5); }
FillKind fill_of_class(int class_id) { return static_cast<FillKind>((class_id / 5) % 3); }

// All palette entries keep their max channel >= 160 so objects stay above the
// clutter band (< 100) in every drawn pixel.
constexpr std::uint8_t kPalette[15][3] = {
    {230, 60, 60},  {60, 220, 60},   {70, 110, 240}, {235, 210, 50}, {210, 60, 220},
    {50, 220, 215}, {240, 140, 40},  {160, 240, 70}, {90, 60, 235},  {240, 80, 160},
    {170, 170, 170}, {200, 160, 230}, {120, 200, 160}, {230, 170, 120}, {160, 190, 60}};

bool inside_shape(ShapeKind kind, double u, double v) {
  switch (kind) {
    case ShapeKind::Circle:
      return u * u + v * v <= 1.0;
    case ShapeKind::Rect:
      return std::abs(u) <= 1.0 && std::abs(v) <= 1.0;
    case ShapeKind::Triangle:  // apex at the top, base at the bottom
      return v >= -1.0 && v <= 1.0 && std::abs(u) <= (v + 1.0) / 2.0;
    case ShapeKind::Diamond:
      return std::abs(u) + std::abs(v) <= 1.0;
    case ShapeKind::Cross:
      return (std::abs(u) <= 1.0 && std::abs(v) <= 0.34) ||
             (std::abs(v) <= 1.0 && std::abs(u) <= 0.34);
  }
  return false;
}

struct PixelRect {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;  // inclusive; empty when x1 < x0
  bool empty() const { return x1 < x0 || y1 < y0; }
  bool overlaps(const PixelRect& o, int gap) const {
    return !(x1 + gap < o.x0 || o.x1 + gap < x0 || y1 + gap < o.y0 || o.y1 + gap < y0);
  }
};

// Rasterizes one object and returns the exact extent of the drawn pixels.
// Color is a per-object nuisance variable: class identity is carried by the
// shape and fill pattern alone.
PixelRect draw_object(ImageU8& img, int class_id, int color_id, double cx, double cy, double rx,
                      double ry) {
  const ShapeKind shape = shape_of_class(class_id);
  const FillKind fill = fill_of_class(class_id);
  const auto* color = kPalette[color_id % 15];
  PixelRect ext;
  ext.x0 = img.width;
  ext.y0 = img.height;
  const int px0 = std::max(0, static_cast<int>(std::floor(cx - rx)));
  const int px1 = std::min(img.width - 1, static_cast<int>(std::ceil(cx + rx)));
  const int py0 = std::max(0, static_cast<int>(std::floor(cy - ry)));
  const int py1 = std::min(img.height - 1, static_cast<int>(std::ceil(cy + ry)));
  for (int py = py0; py <= py1; ++py)
    for (int px = px0; px <= px1; ++px) {
      const double u = (px + 0.5 - cx) / rx;
      const double v = (py + 0.5 - cy) / ry;
      if (!inside_shape(shape, u, v)) continue;
      if (fill == FillKind::Ring && inside_shape(shape, u / 0.62, v / 0.62)) continue;
      if (fill == FillKind::Checker && ((px / 2 + py / 2) % 2 != 0)) continue;
      auto* p = img.px(px, py);
      p[0] = color[0];
      p[1] = color[1];
      p[2] = color[2];
      ext.x0 = std::min(ext.x0, px);
      ext.y0 = std::min(ext.y0, py);
      ext.x1 = std::max(ext.x1, px);
      ext.y1 = std::max(ext.y1, py);
    }
  return ext;
}

void draw_background(ImageU8& img, std::mt19937_64& rng, double clutter) {
  std::uniform_int_distribution<int> base(28, 52);
  for (auto& b : img.rgb) b = static_cast<std::uint8_t>(base(rng));
  std::uniform_int_distribution<int> xd(0, img.width - 1), yd(0, img.height - 1);
  std::uniform_int_distribution<int> shade(20, 95), len(1, 3);
  const int speckles = static_cast<int>(clutter * img.width * img.height);
  for (int i = 0; i < speckles; ++i) {
    int x = xd(rng), y = yd(rng);
    const int v = shade(rng), n = len(rng);
    for (int k = 0; k < n && x + k < img.width; ++k) {
      auto* p = img.px(x + k, y);
      p[0] = p[1] = p[2] = static_cast<std::uint8_t>(v);
    }
  }
}

json record_to_json(const SampleRecord& r) {
  json boxes = json::array();
  for (const auto& b : r.boxes) boxes.push_back({b.x_min, b.y_min, b.x_max, b.y_max});
  return json{{"image", r.image},
              {"class_id", r.class_id},
              {"boxes", boxes},
              {"has_bbox_labels", r.has_bbox_labels},
              {"split", r.split}};
}

}  // namespace

GenerateResult generate(const SynthConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "images", ec);
  if (ec) throw IoError("cannot create output directory " + out_dir + ": " + ec.message());

  GenerateResult result;
  result.per_class_train.assign(static_cast<std::size_t>(cfg.num_classes), 0);
  result.per_class_val.assign(static_cast<std::size_t>(cfg.num_classes), 0);
  result.manifest_path = (fs::path(out_dir) / "manifest.jsonl").string();
  std::ofstream manifest(result.manifest_path, std::ios::trunc);
  if (!manifest) throw IoError("cannot write manifest: " + result.manifest_path);

  const auto render_split = [&](const std::string& split, int count, std::uint32_t split_tag) {
    for (int idx = 0; idx < count; ++idx) {
      std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed),
                        static_cast<std::uint32_t>(cfg.seed >> 32), split_tag,
                        static_cast<std::uint32_t>(idx)};
      std::mt19937_64 rng(seq);

      ImageU8 img;
      img.width = img.height = cfg.image_size;
      img.rgb.assign(3u * cfg.image_size * cfg.image_size, 0);
      draw_background(img, rng, cfg.clutter);

      const int class_id = std::uniform_int_distribution<int>(0, cfg.num_classes - 1)(rng);
      const int wanted = std::uniform_int_distribution<int>(1, cfg.max_objects)(rng);

      SampleRecord rec;
      char name[64];
      std::snprintf(name, sizeof(name), "images/%s_%05d.png", split.c_str(), idx);
      rec.image = name;
      rec.class_id = class_id;
      rec.split = split;

      std::vector<PixelRect> placed;
      std::uniform_real_distribution<double> u01(0.0, 1.0);
      for (int obj = 0; obj < wanted; ++obj) {
        bool done = false;
        for (int attempt = 0; attempt < 60 && !done; ++attempt) {
          const double s = cfg.scale_min + (cfg.scale_max - cfg.scale_min) * u01(rng);
          const double a =
              cfg.aspect_min * std::pow(cfg.aspect_max / cfg.aspect_min, u01(rng));
          const double rx = 0.5 * s * std::sqrt(a) * cfg.image_size;
          const double ry = 0.5 * s / std::sqrt(a) * cfg.image_size;
          if (2 * rx >= cfg.image_size - 1 || 2 * ry >= cfg.image_size - 1) continue;
          const double cx = rx + 0.5 + (cfg.image_size - 2 * rx - 1.0) * u01(rng);
          const double cy = ry + 0.5 + (cfg.image_size - 2 * ry - 1.0) * u01(rng);

          const PixelRect cand{static_cast<int>(std::floor(cx - rx)),
                               static_cast<int>(std::floor(cy - ry)),
                               static_cast<int>(std::ceil(cx + rx)),
                               static_cast<int>(std::ceil(cy + ry))};
          bool clash = false;
          for (const auto& p : placed) clash = clash || cand.overlaps(p, 1);
          if (clash) continue;

          const int color_id = std::uniform_int_distribution<int>(0, 14)(rng);
          const PixelRect ext = draw_object(img, class_id, color_id, cx, cy, rx, ry);
          if (ext.empty()) continue;
          placed.push_back(ext);
          rec.boxes.push_back(Box{static_cast<double>(ext.x0) / cfg.image_size,
                                  static_cast<double>(ext.y0) / cfg.image_size,
                                  static_cast<double>(ext.x1 + 1) / cfg.image_size,
                                  static_cast<double>(ext.y1 + 1) / cfg.image_size});
          done = true;
        }
        if (!done && obj == 0)
          throw IoError("generator failed to place the first object; config too tight");
      }

      write_png((fs::path(out_dir) / rec.image).string(), img);
      manifest << record_to_json(rec).dump() << "\n";
      auto& tally = split == "train" ? result.per_class_train : result.per_class_val;
      tally[static_cast<std::size_t>(class_id)] += 1;
    }
  };

  render_split("train", cfg.train_images, 1u);
  render_split("val", cfg.val_images, 2u);
  manifest.flush();
  if (!manifest) throw IoError("write failed for manifest: " + result.manifest_path);
  return result;
}

std::vector<SampleRecord> load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open manifest: " + path);
  const fs::path base = fs::path(path).parent_path();

  std::vector<SampleRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      SampleRecord r;
      r.image = j.at("image");
      r.class_id = j.at("class_id");
      r.has_bbox_labels = j.at("has_bbox_labels");
      r.split = j.at("split");
      for (const auto& b : j.at("boxes")) {
        if (!b.is_array() || b.size() != 4)
          throw DataError("box is not a 4-element array");
        r.boxes.push_back(Box{b.at(0), b.at(1), b.at(2), b.at(3)});
      }
      if (r.image.empty()) throw DataError("empty image path");
      if (r.class_id < 0) throw DataError("negative class_id");
      if (r.split != "train" && r.split != "val") throw DataError("split must be train or val");
      if (!r.has_bbox_labels && !r.boxes.empty())
        throw DataError("has_bbox_labels is false but boxes are present");
      for (const auto& b : r.boxes) b.validate();
      r.image_path = (base / r.image).string();
      records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw DataError("manifest line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("manifest line " + std::to_string(line_no) + " (" +
                      std::string(j.value("image", "?")) + "): " + e.what());
    }
  }
  return records;
}

std::vector<SampleRecord> withhold_boxes(std::vector<SampleRecord> records,
                                         const std::set<int>& held_out_classes) {
  std::set<int> observed;
  for (const auto& r : records) observed.insert(r.class_id);
  for (int c : held_out_classes)
    if (!observed.count(c))
      throw DataError("withhold_boxes: class " + std::to_string(c) + " not present in the records");
  for (auto& r : records) {
    if (held_out_classes.count(r.class_id)) {
      r.boxes.clear();
      r.has_bbox_labels = false;
    }
  }
  return records;
}

SampleStore::SampleStore(std::vector<SampleRecord> records)
    : records_(std::move(records)), cache_(records_.size()) {}

const Tensor& SampleStore::image(std::size_t i) const {
  if (cache_[i].size() == 0) cache_[i] = image_to_tensor(read_png(records_[i].image_path));
  return cache_[i];
}

}  // namespace objn
