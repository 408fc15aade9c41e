#include "objn/model.hpp"

#include <json.hpp>

#include "objn/errors.hpp"
#include "objn/kernels.hpp"

namespace objn {

using json = nlohmann::json;
using std::int64_t;

std::string layer_kind(const LayerSpec& spec) {
  if (std::holds_alternative<ConvSpec>(spec)) return "conv";
  if (std::holds_alternative<ReluSpec>(spec)) return "relu";
  if (std::holds_alternative<LrnSpec>(spec)) return "lrn";
  if (std::holds_alternative<MaxPoolSpec>(spec)) return "maxpool";
  return "dense";
}

int NetworkConfig::head_size() const {
  if (const auto* c = std::get_if<ClassificationHead>(&head)) return c->num_classes;
  return std::get<BBoxHead>(head).grid.total_cells();
}

namespace {

struct Propagated {
  std::vector<int64_t> dims;  // [C,H,W] or [D]
  int64_t flat() const {
    int64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

[[noreturn]] void layer_error(std::size_t i, const LayerSpec& spec, const std::string& msg) {
  throw ModelError("trunk layer " + std::to_string(i) + " (" + layer_kind(spec) + "): " + msg);
}

Propagated propagate(const NetworkConfig& cfg, std::size_t upto) {
  Propagated s{{cfg.in_channels, cfg.in_h, cfg.in_w}};
  for (std::size_t i = 0; i < upto; ++i) {
    const auto& spec = cfg.trunk[i];
    if (const auto* c = std::get_if<ConvSpec>(&spec)) {
      if (s.dims.size() != 3) layer_error(i, spec, "conv after flattening dense layer");
      if (c->out_channels < 1 || c->kernel < 1 || c->stride < 1 || c->pad < 0)
        layer_error(i, spec, "invalid conv parameters");
      const int64_t h = (s.dims[1] + 2 * c->pad - c->kernel) / c->stride + 1;
      const int64_t w = (s.dims[2] + 2 * c->pad - c->kernel) / c->stride + 1;
      if (s.dims[1] + 2 * c->pad < c->kernel || s.dims[2] + 2 * c->pad < c->kernel)
        layer_error(i, spec, "kernel " + std::to_string(c->kernel) + " larger than padded input " +
                                 std::to_string(s.dims[1]) + "x" + std::to_string(s.dims[2]));
      s.dims = {c->out_channels, h, w};
    } else if (std::holds_alternative<ReluSpec>(spec)) {
      // shape preserved
    } else if (const auto* l = std::get_if<LrnSpec>(&spec)) {
      if (s.dims.size() != 3) layer_error(i, spec, "lrn after flattening dense layer");
      if (l->params.n < 1 || l->params.n % 2 == 0)
        layer_error(i, spec, "window n must be odd and >= 1, got " + std::to_string(l->params.n));
      if (l->params.k <= 0 || l->params.beta <= 0 || l->params.alpha < 0)
        layer_error(i, spec, "invalid lrn parameters");
    } else if (const auto* m = std::get_if<MaxPoolSpec>(&spec)) {
      if (s.dims.size() != 3) layer_error(i, spec, "maxpool after flattening dense layer");
      if (m->window < 1 || m->stride < 1) layer_error(i, spec, "invalid maxpool parameters");
      if (m->window > s.dims[1] || m->window > s.dims[2])
        layer_error(i, spec, "window " + std::to_string(m->window) + " larger than input " +
                                 std::to_string(s.dims[1]) + "x" + std::to_string(s.dims[2]));
      s.dims = {s.dims[0], (s.dims[1] - m->window) / m->stride + 1,
                (s.dims[2] - m->window) / m->stride + 1};
    } else {
      const auto& d = std::get<DenseSpec>(spec);
      if (d.out_features < 1) layer_error(i, spec, "out_features must be >= 1");
      s.dims = {d.out_features};
    }
  }
  return s;
}

}  // namespace

void NetworkConfig::validate() const {
  if (in_channels < 1 || in_h < 1 || in_w < 1) throw ModelError("config: invalid input dims");
  if (feature_dim < 1) throw ModelError("config: feature_dim must be >= 1");
  if (trunk.empty()) throw ModelError("config: trunk is empty");
  const auto out = propagate(*this, trunk.size());
  if (out.dims.size() != 1 || out.dims[0] != feature_dim) {
    std::string got = out.dims.size() == 1 ? std::to_string(out.dims[0])
                                           : Tensor::shape_string(out.dims) + " (not flattened)";
    throw ModelError("trunk layer " + std::to_string(trunk.size() - 1) + " (" +
                     layer_kind(trunk.back()) + "): trunk output " + got +
                     " does not match feature_dim " + std::to_string(feature_dim));
  }
  if (const auto* c = std::get_if<ClassificationHead>(&head)) {
    if (c->num_classes < 2) throw ModelError("config: classification head needs >= 2 classes");
  } else {
    std::get<BBoxHead>(head).grid.validate();
  }
}

std::vector<LayerSpec> default_trunk() {
  return {ConvSpec{16, 5, 1, 2}, ReluSpec{}, LrnSpec{}, MaxPoolSpec{2, 2},
          ConvSpec{32, 5, 1, 2}, ReluSpec{}, LrnSpec{}, MaxPoolSpec{2, 2},
          ConvSpec{32, 3, 1, 1}, ReluSpec{}, DenseSpec{128}, ReluSpec{}};
}

Model Model::build(const NetworkConfig& cfg) {
  cfg.validate();
  Model m;
  m.cfg_ = cfg;

  const auto add_param = [&m](const std::string& name, std::vector<int64_t> dims, bool weight) {
    TensorT<float> t(std::move(dims));
    if (weight) {
      int64_t fan_in = 1;
      for (std::size_t d = 1; d < t.dims().size(); ++d) fan_in *= t.dims()[d];
      if (t.dims().size() == 2) fan_in = t.dims()[0];  // dense weights are [D, M]
      const double stddev = m.cfg_.init_std > 0.0
                                ? m.cfg_.init_std
                                : std::sqrt(2.0 / static_cast<double>(fan_in));
      std::seed_seq seq{static_cast<std::uint32_t>(m.cfg_.init_seed),
                        static_cast<std::uint32_t>(m.cfg_.init_seed >> 32),
                        static_cast<std::uint32_t>(m.params_.size())};
      std::mt19937_64 rng(seq);
      fill_normal(t, rng, stddev);
    }
    m.names_.push_back(name);
    m.params_.push_back(std::move(t));
  };

  for (std::size_t i = 0; i < cfg.trunk.size(); ++i) {
    const auto in_shape = propagate(cfg, i);
    const auto& spec = cfg.trunk[i];
    const std::string base = "trunk." + std::to_string(i);
    if (const auto* c = std::get_if<ConvSpec>(&spec)) {
      m.layer_slot_.push_back(static_cast<int>(m.params_.size()));
      add_param(base + ".weight", {c->out_channels, in_shape.dims[0], c->kernel, c->kernel}, true);
      add_param(base + ".bias", {c->out_channels}, false);
    } else if (const auto* d = std::get_if<DenseSpec>(&spec)) {
      m.layer_slot_.push_back(static_cast<int>(m.params_.size()));
      add_param(base + ".weight", {in_shape.flat(), d->out_features}, true);
      add_param(base + ".bias", {d->out_features}, false);
    } else {
      m.layer_slot_.push_back(-1);
    }
  }
  add_param("head.weight", {cfg.feature_dim, cfg.head_size()}, true);
  add_param("head.bias", {cfg.head_size()}, false);
  return m;
}

Tensor Model::forward(const Tensor& batch) const {
  ForwardTrace trace;
  return forward(batch, trace);
}

Tensor Model::forward(const Tensor& batch, ForwardTrace& trace) const {
  if (batch.rank() != 4 || batch.dim(1) != cfg_.in_channels || batch.dim(2) != cfg_.in_h ||
      batch.dim(3) != cfg_.in_w)
    throw ModelError("forward: batch shape " + batch.shape_str() + " does not match input " +
                     std::to_string(cfg_.in_channels) + "x" + std::to_string(cfg_.in_h) + "x" +
                     std::to_string(cfg_.in_w));
  const int64_t n = batch.dim(0);
  trace.layer_inputs.clear();
  Tensor x = batch;
  for (std::size_t i = 0; i < cfg_.trunk.size(); ++i) {
    const auto& spec = cfg_.trunk[i];
    trace.layer_inputs.push_back(x);
    if (const auto* c = std::get_if<ConvSpec>(&spec)) {
      const int slot = layer_slot_[i];
      x = kernels::conv2d_forward(x, params_[slot], params_[slot + 1], c->stride, c->pad);
    } else if (std::holds_alternative<ReluSpec>(spec)) {
      x = kernels::relu_forward(x);
    } else if (const auto* l = std::get_if<LrnSpec>(&spec)) {
      x = kernels::lrn_forward(x, l->params);
    } else if (const auto* p = std::get_if<MaxPoolSpec>(&spec)) {
      x = kernels::maxpool_forward(x, p->window, p->stride);
    } else {
      const int slot = layer_slot_[i];
      if (x.rank() != 2) x = x.reshaped({n, x.size() / n});
      x = kernels::dense_forward(x, params_[slot], params_[slot + 1]);
    }
  }
  trace.features = x;
  const int head_slot = static_cast<int>(params_.size()) - 2;
  return kernels::dense_forward(x, params_[head_slot], params_[head_slot + 1]);
}

std::vector<Tensor> Model::backward(const ForwardTrace& trace, const Tensor& d_logits) const {
  std::vector<Tensor> grads(params_.size());
  const int64_t n = trace.features.dim(0);

  const int head_slot = static_cast<int>(params_.size()) - 2;
  auto head = kernels::dense_backward(trace.features, params_[head_slot], d_logits);
  grads[head_slot] = std::move(head.d_weights);
  grads[head_slot + 1] = std::move(head.d_bias);
  Tensor dx = std::move(head.d_input);

  for (std::size_t ri = cfg_.trunk.size(); ri-- > 0;) {
    const auto& spec = cfg_.trunk[ri];
    const Tensor& in = trace.layer_inputs[ri];
    if (const auto* c = std::get_if<ConvSpec>(&spec)) {
      const int slot = layer_slot_[ri];
      auto g = kernels::conv2d_backward(in, params_[slot], c->stride, c->pad, dx);
      grads[slot] = std::move(g.d_weights);
      grads[slot + 1] = std::move(g.d_bias);
      dx = std::move(g.d_input);
    } else if (std::holds_alternative<ReluSpec>(spec)) {
      dx = kernels::relu_backward(in, dx);
    } else if (const auto* l = std::get_if<LrnSpec>(&spec)) {
      dx = kernels::lrn_backward(in, l->params, dx);
    } else if (const auto* p = std::get_if<MaxPoolSpec>(&spec)) {
      dx = kernels::maxpool_backward(in, p->window, p->stride, dx);
    } else {
      const int slot = layer_slot_[ri];
      const Tensor in2 = in.rank() == 2 ? in : in.reshaped({n, in.size() / n});
      auto g = kernels::dense_backward(in2, params_[slot], dx);
      grads[slot] = std::move(g.d_weights);
      grads[slot + 1] = std::move(g.d_bias);
      dx = g.d_input.same_shape(in) ? std::move(g.d_input) : g.d_input.reshaped(in.dims());
    }
  }
  return grads;
}

Model head_swap(const Model& source, const NetworkConfig& new_config) {
  Model fresh = Model::build(new_config);
  const auto& src_names = source.param_names();
  // Damp the fresh head: a trained trunk produces larger features than an
  // initialized one, and a full-scale random head on top of them starts from
  // saturated logits that first have to be unlearned.
  for (std::size_t i = 0; i < fresh.param_names().size(); ++i) {
    if (fresh.param_names()[i] == "head.weight")
      for (auto& v : fresh.params()[i].flat()) v *= 0.01f;
  }
  for (std::size_t i = 0; i < fresh.param_names().size(); ++i) {
    const auto& name = fresh.param_names()[i];
    if (name.rfind("trunk.", 0) != 0) continue;
    const auto it = std::find(src_names.begin(), src_names.end(), name);
    if (it == src_names.end())
      throw ModelError("head_swap: source checkpoint lacks trunk parameter " + name);
    const auto& src = source.params()[static_cast<std::size_t>(it - src_names.begin())];
    if (!src.same_shape(fresh.params()[i]))
      throw ModelError("head_swap: trunk parameter " + name + " shape " + src.shape_str() +
                       " does not match target " + fresh.params()[i].shape_str());
    fresh.params()[i] = src;
  }
  return fresh;
}

// ---------------------------------------------------------------------------
// JSON echo of the network configuration (embedded in checkpoints)
// ---------------------------------------------------------------------------

namespace {

json layer_to_json(const LayerSpec& spec) {
  json j;
  j["kind"] = layer_kind(spec);
  if (const auto* c = std::get_if<ConvSpec>(&spec)) {
    j["out_channels"] = c->out_channels;
    j["kernel"] = c->kernel;
    j["stride"] = c->stride;
    j["pad"] = c->pad;
  } else if (const auto* l = std::get_if<LrnSpec>(&spec)) {
    j["k"] = l->params.k;
    j["n"] = l->params.n;
    j["alpha"] = l->params.alpha;
    j["beta"] = l->params.beta;
  } else if (const auto* m = std::get_if<MaxPoolSpec>(&spec)) {
    j["window"] = m->window;
    j["stride"] = m->stride;
  } else if (const auto* d = std::get_if<DenseSpec>(&spec)) {
    j["out_features"] = d->out_features;
  }
  return j;
}

LayerSpec layer_from_json(const json& j) {
  const std::string kind = j.at("kind");
  if (kind == "conv")
    return ConvSpec{j.at("out_channels"), j.at("kernel"), j.at("stride"), j.at("pad")};
  if (kind == "relu") return ReluSpec{};
  if (kind == "lrn") return LrnSpec{{j.at("k"), j.at("n"), j.at("alpha"), j.at("beta")}};
  if (kind == "maxpool") return MaxPoolSpec{j.at("window"), j.at("stride")};
  if (kind == "dense") return DenseSpec{j.at("out_features")};
  throw ModelError("config json: unknown layer kind '" + kind + "'");
}

json grid_to_json(const BBoxGrid& g) {
  return json{{"nx", g.nx},
              {"ny", g.ny},
              {"ns", g.ns},
              {"na", g.na},
              {"scale_min", g.scale_min},
              {"scale_max", g.scale_max},
              {"aspect_min", g.aspect_min},
              {"aspect_max", g.aspect_max},
              {"sigma_x", g.sigma_x},
              {"sigma_y", g.sigma_y},
              {"sigma_s", g.sigma_s},
              {"sigma_a", g.sigma_a}};
}

BBoxGrid grid_from_json(const json& j) {
  BBoxGrid g;
  g.nx = j.at("nx");
  g.ny = j.at("ny");
  g.ns = j.at("ns");
  g.na = j.at("na");
  g.scale_min = j.at("scale_min");
  g.scale_max = j.at("scale_max");
  g.aspect_min = j.at("aspect_min");
  g.aspect_max = j.at("aspect_max");
  g.sigma_x = j.at("sigma_x");
  g.sigma_y = j.at("sigma_y");
  g.sigma_s = j.at("sigma_s");
  g.sigma_a = j.at("sigma_a");
  return g;
}

}  // namespace

std::string network_config_to_json(const NetworkConfig& cfg) {
  json j;
  j["input"] = {cfg.in_channels, cfg.in_h, cfg.in_w};
  j["trunk"] = json::array();
  for (const auto& spec : cfg.trunk) j["trunk"].push_back(layer_to_json(spec));
  j["feature_dim"] = cfg.feature_dim;
  if (const auto* c = std::get_if<ClassificationHead>(&cfg.head))
    j["head"] = {{"kind", "classification"}, {"num_classes", c->num_classes}};
  else
    j["head"] = {{"kind", "bbox"}, {"grid", grid_to_json(std::get<BBoxHead>(cfg.head).grid)}};
  j["init_seed"] = cfg.init_seed;
  j["init_std"] = cfg.init_std;
  return j.dump();
}

NetworkConfig network_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ModelError(std::string("config json: parse error: ") + e.what());
  }
  try {
    NetworkConfig cfg;
    cfg.in_channels = j.at("input").at(0);
    cfg.in_h = j.at("input").at(1);
    cfg.in_w = j.at("input").at(2);
    cfg.trunk.clear();
    for (const auto& l : j.at("trunk")) cfg.trunk.push_back(layer_from_json(l));
    cfg.feature_dim = j.at("feature_dim");
    const auto& h = j.at("head");
    if (h.at("kind") == "classification")
      cfg.head = ClassificationHead{h.at("num_classes")};
    else if (h.at("kind") == "bbox")
      cfg.head = BBoxHead{grid_from_json(h.at("grid"))};
    else
      throw ModelError("config json: unknown head kind");
    cfg.init_seed = j.at("init_seed");
    cfg.init_std = j.at("init_std");
    return cfg;
  } catch (const json::exception& e) {
    throw ModelError(std::string("config json: missing or malformed field: ") + e.what());
  }
}

}  // namespace objn
