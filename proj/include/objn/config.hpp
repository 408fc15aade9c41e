#pragma once

#include <map>
#include <set>
#include <string>

#include "objn/data.hpp"
#include "objn/detector.hpp"
#include "objn/model.hpp"
#include "objn/trainer.hpp"

namespace objn {

// Flat key-value configuration: one `section.key = value` per line, '#'
// comments. Unknown keys are rejected at load time; every getter falls back
// to the built-in default that configs/default.cfg spells out.
class RunConfig {
 public:
  static RunConfig load(const std::string& path);
  static RunConfig from_text(const std::string& text);  // for tests
  static RunConfig defaults() { return RunConfig(); }

  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  std::string get_string(const std::string& key) const;

  SynthConfig synth() const;
  BBoxGrid grid() const;
  NetworkConfig network_classification() const;
  NetworkConfig network_bbox() const;
  TrainConfig train() const;
  NmsParams nms() const;
  double iou_match() const;
  ExperimentConfig experiment() const;

 private:
  std::map<std::string, std::string> values_;
};

// "conv:16:5:1:2,relu,lrn,maxpool:2:2,dense:128" -> layer list.
std::vector<LayerSpec> parse_trunk(const std::string& text);

// "8,9" -> {8, 9}; empty string -> {}.
std::set<int> parse_class_list(const std::string& text);

}  // namespace objn
