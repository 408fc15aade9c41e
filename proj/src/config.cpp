#include "objn/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "objn/errors.hpp"

namespace objn {

namespace {

const std::map<std::string, std::string>& default_values() {
  static const std::map<std::string, std::string> defaults = {
      {"data.num_classes", "10"},
      {"data.train_images", "600"},
      {"data.val_images", "150"},
      {"data.image_size", "32"},
      {"data.max_objects", "2"},
      {"data.scale_min", "0.25"},
      {"data.scale_max", "0.55"},
      {"data.aspect_min", "0.6"},
      {"data.aspect_max", "1.7"},
      {"data.clutter", "0.04"},
      {"data.seed", "1"},

      {"net.input_channels", "3"},
      {"net.input_size", "32"},
      {"net.trunk",
       "conv:16:5:1:2,relu,lrn,maxpool:2:2,conv:32:5:1:2,relu,lrn,maxpool:2:2,conv:32:3:1:1,relu,"
       "dense:128,relu"},
      {"net.feature_dim", "128"},
      {"net.num_classes", "10"},
      {"net.init_seed", "1"},
      {"net.init_std", "0"},

      {"grid.nx", "8"},
      {"grid.ny", "8"},
      {"grid.ns", "4"},
      {"grid.na", "3"},
      {"grid.scale_min", "0.1"},
      {"grid.scale_max", "1.0"},
      {"grid.aspect_min", "0.3333333333333333"},
      {"grid.aspect_max", "3.0"},
      {"grid.sigma_x", "0.5"},
      {"grid.sigma_y", "0.5"},
      {"grid.sigma_s", "0.5"},
      {"grid.sigma_a", "0.5"},

      {"train.lr", "0.02"},
      {"train.momentum", "0.9"},
      {"train.weight_decay", "0.0005"},
      {"train.batch_size", "32"},
      {"train.epochs", "10"},
      {"train.seed", "1"},
      {"train.lr_decay", "0.5"},
      {"train.lr_decay_every", "0"},

      {"nms.iou", "0.5"},
      {"nms.score_min", "0.01"},
      {"nms.max_det", "5"},
      {"eval.iou_match", "0.5"},

      {"experiment.seeds", "5"},
      {"experiment.pretrain_epochs", "5"},
      {"experiment.detect_epochs", "4"},
      {"experiment.classify_epochs", "5"},
      {"experiment.held_out", "8,9"},
      {"experiment.score_min", "0"},
  };
  return defaults;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!default_values().count(key))
      throw ConfigError("unknown config key '" + key + "' (line " + std::to_string(line_no) + ")");
    cfg.values_[key] = value;
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return from_text(ss.str());
}

std::string RunConfig::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it != values_.end()) return it->second;
  const auto dt = default_values().find(key);
  if (dt == default_values().end()) throw ConfigError("unknown config key '" + key + "'");
  return dt->second;
}

int RunConfig::get_int(const std::string& key) const {
  const auto s = get_string(key);
  int v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw ConfigError("config key '" + key + "': '" + s + "' is not an integer");
  return v;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  const auto s = get_string(key);
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw ConfigError("config key '" + key + "': '" + s + "' is not an unsigned integer");
  return v;
}

double RunConfig::get_double(const std::string& key) const {
  const auto s = get_string(key);
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': '" + s + "' is not a number");
  }
}

bool RunConfig::get_bool(const std::string& key) const {
  const auto s = get_string(key);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("config key '" + key + "': '" + s + "' is not a boolean");
}

std::vector<LayerSpec> parse_trunk(const std::string& text) {
  std::vector<LayerSpec> trunk;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    std::vector<std::string> parts;
    std::istringstream ps(item);
    std::string p;
    while (std::getline(ps, p, ':')) parts.push_back(trim(p));
    const auto num = [&](std::size_t i) {
      try {
        return std::stod(parts.at(i));
      } catch (const std::exception&) {
        throw ConfigError("trunk spec '" + item + "': bad numeric field");
      }
    };
    const auto& kind = parts[0];
    if (kind == "conv") {
      if (parts.size() != 5) throw ConfigError("trunk spec '" + item + "': conv:out:kernel:stride:pad");
      trunk.push_back(ConvSpec{static_cast<int>(num(1)), static_cast<int>(num(2)),
                               static_cast<int>(num(3)), static_cast<int>(num(4))});
    } else if (kind == "relu") {
      trunk.push_back(ReluSpec{});
    } else if (kind == "lrn") {
      LrnParams lp;
      if (parts.size() == 5) {
        lp.k = num(1);
        lp.n = static_cast<int>(num(2));
        lp.alpha = num(3);
        lp.beta = num(4);
      } else if (parts.size() != 1) {
        throw ConfigError("trunk spec '" + item + "': lrn or lrn:k:n:alpha:beta");
      }
      trunk.push_back(LrnSpec{lp});
    } else if (kind == "maxpool") {
      if (parts.size() != 3) throw ConfigError("trunk spec '" + item + "': maxpool:window:stride");
      trunk.push_back(MaxPoolSpec{static_cast<int>(num(1)), static_cast<int>(num(2))});
    } else if (kind == "dense") {
      if (parts.size() != 2) throw ConfigError("trunk spec '" + item + "': dense:out_features");
      trunk.push_back(DenseSpec{static_cast<int>(num(1))});
    } else {
      throw ConfigError("trunk spec: unknown layer kind '" + kind + "'");
    }
  }
  if (trunk.empty()) throw ConfigError("trunk spec is empty");
  return trunk;
}

std::set<int> parse_class_list(const std::string& text) {
  std::set<int> out;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    int v = 0;
    const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || p != item.data() + item.size() || v < 0)
      throw ConfigError("class list: '" + item + "' is not a class id");
    out.insert(v);
  }
  return out;
}

SynthConfig RunConfig::synth() const {
  SynthConfig s;
  s.num_classes = get_int("data.num_classes");
  s.train_images = get_int("data.train_images");
  s.val_images = get_int("data.val_images");
  s.image_size = get_int("data.image_size");
  s.max_objects = get_int("data.max_objects");
  s.scale_min = get_double("data.scale_min");
  s.scale_max = get_double("data.scale_max");
  s.aspect_min = get_double("data.aspect_min");
  s.aspect_max = get_double("data.aspect_max");
  s.clutter = get_double("data.clutter");
  s.seed = get_u64("data.seed");
  s.validate();
  return s;
}

BBoxGrid RunConfig::grid() const {
  BBoxGrid g;
  g.nx = get_int("grid.nx");
  g.ny = get_int("grid.ny");
  g.ns = get_int("grid.ns");
  g.na = get_int("grid.na");
  g.scale_min = get_double("grid.scale_min");
  g.scale_max = get_double("grid.scale_max");
  g.aspect_min = get_double("grid.aspect_min");
  g.aspect_max = get_double("grid.aspect_max");
  g.sigma_x = get_double("grid.sigma_x");
  g.sigma_y = get_double("grid.sigma_y");
  g.sigma_s = get_double("grid.sigma_s");
  g.sigma_a = get_double("grid.sigma_a");
  g.validate();
  return g;
}

namespace {

NetworkConfig base_network(const RunConfig& cfg) {
  NetworkConfig net;
  net.in_channels = cfg.get_int("net.input_channels");
  net.in_h = net.in_w = cfg.get_int("net.input_size");
  net.trunk = parse_trunk(cfg.get_string("net.trunk"));
  net.feature_dim = cfg.get_int("net.feature_dim");
  net.init_seed = cfg.get_u64("net.init_seed");
  net.init_std = cfg.get_double("net.init_std");
  return net;
}

}  // namespace

NetworkConfig RunConfig::network_classification() const {
  NetworkConfig net = base_network(*this);
  net.head = ClassificationHead{get_int("net.num_classes")};
  net.validate();
  return net;
}

NetworkConfig RunConfig::network_bbox() const {
  NetworkConfig net = base_network(*this);
  net.head = BBoxHead{grid()};
  net.validate();
  return net;
}

TrainConfig RunConfig::train() const {
  TrainConfig t;
  t.lr = get_double("train.lr");
  t.momentum = get_double("train.momentum");
  t.weight_decay = get_double("train.weight_decay");
  t.batch_size = get_int("train.batch_size");
  t.epochs = get_int("train.epochs");
  t.seed = get_u64("train.seed");
  t.lr_decay = get_double("train.lr_decay");
  t.lr_decay_every = get_int("train.lr_decay_every");
  t.validate();
  return t;
}

NmsParams RunConfig::nms() const {
  NmsParams n;
  n.iou_threshold = get_double("nms.iou");
  n.score_threshold = get_double("nms.score_min");
  n.max_detections = get_int("nms.max_det");
  return n;
}

double RunConfig::iou_match() const { return get_double("eval.iou_match"); }

ExperimentConfig RunConfig::experiment() const {
  ExperimentConfig e;
  e.seeds = get_int("experiment.seeds");
  e.pretrain_epochs = get_int("experiment.pretrain_epochs");
  e.detect_epochs = get_int("experiment.detect_epochs");
  e.classify_epochs = get_int("experiment.classify_epochs");
  e.train = train();
  e.net_cls = network_classification();
  e.net_det = network_bbox();
  e.held_out = parse_class_list(get_string("experiment.held_out"));
  e.eval.nms = nms();
  e.eval.nms.score_threshold = get_double("experiment.score_min");
  e.eval.iou_match = iou_match();
  return e;
}

}  // namespace objn
