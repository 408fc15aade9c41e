#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "objn/bbox.hpp"
#include "objn/image_io.hpp"
#include "objn/tensor.hpp"

namespace objn {

struct SampleRecord {
  std::string image;       // path as written in the manifest (relative)
  std::string image_path;  // resolved against the manifest location
  int class_id = 0;
  std::vector<Box> boxes;
  bool has_bbox_labels = true;
  std::string split = "train";
};

// Synthetic "shapes" detection dataset: each image carries 1..max_objects
// instances of a single class (shape type x fill pattern) over a cluttered
// dark background. Object pixels are bright (max channel >= 150), clutter
// stays below 100, so the rendered extent is recoverable from the image.
struct SynthConfig {
  int num_classes = 10;
  int train_images = 1200;
  int val_images = 300;
  int image_size = 32;
  int max_objects = 2;
  double scale_min = 0.25;
  double scale_max = 0.55;
  double aspect_min = 0.6;
  double aspect_max = 1.7;
  double clutter = 0.04;
  std::uint64_t seed = 1;

  void validate() const;
};

struct GenerateResult {
  std::string manifest_path;
  std::vector<int> per_class_train;  // records per class, train split
  std::vector<int> per_class_val;
};

GenerateResult generate(const SynthConfig& cfg, const std::string& out_dir);

std::vector<SampleRecord> load_manifest(const std::string& path);

// Clears boxes of records whose class is held out; class labels stay.
std::vector<SampleRecord> withhold_boxes(std::vector<SampleRecord> records,
                                         const std::set<int>& held_out_classes);

// Image cache with an instrumentable box accessor; the trainer reads ground
// truth exclusively through boxes().
class SampleStore {
 public:
  explicit SampleStore(std::vector<SampleRecord> records);
  virtual ~SampleStore() = default;

  std::size_t size() const { return records_.size(); }
  const SampleRecord& record(std::size_t i) const { return records_[i]; }
  const Tensor& image(std::size_t i) const;
  virtual const std::vector<Box>& boxes(std::size_t i) const { return records_[i].boxes; }

 private:
  std::vector<SampleRecord> records_;
  mutable std::vector<Tensor> cache_;
};

}  // namespace objn
