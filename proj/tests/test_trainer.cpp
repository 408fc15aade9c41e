#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <set>

#include "objn/checkpoint.hpp"
#include "objn/loss.hpp"
#include "objn/trainer.hpp"

using namespace objn;
namespace fs = std::filesystem;

namespace {

fs::path dataset_dir(const std::string& name, const SynthConfig& cfg) {
  const auto dir = fs::temp_directory_path() / "objn_trainer_test" / name;
  if (!fs::exists(dir / "manifest.jsonl")) {
    fs::create_directories(dir);
    generate(cfg, dir.string());
  }
  return dir;
}

SynthConfig two_class_cfg() {
  SynthConfig cfg;
  cfg.num_classes = 2;  // solid circles vs solid rectangles
  cfg.train_images = 120;
  cfg.val_images = 24;
  cfg.image_size = 16;
  cfg.max_objects = 1;
  cfg.scale_min = 0.35;
  cfg.scale_max = 0.55;
  cfg.aspect_min = 0.9;
  cfg.aspect_max = 1.15;
  cfg.seed = 5;
  return cfg;
}

SynthConfig ten_class_cfg() {
  SynthConfig cfg;
  cfg.num_classes = 10;
  cfg.train_images = 50;
  cfg.val_images = 20;
  cfg.image_size = 16;
  cfg.max_objects = 1;
  cfg.scale_min = 0.3;
  cfg.scale_max = 0.55;
  cfg.seed = 6;
  return cfg;
}

NetworkConfig tiny_net(int image_size, HeadSpec head, std::uint64_t seed = 1) {
  NetworkConfig net;
  net.in_channels = 3;
  net.in_h = net.in_w = image_size;
  net.trunk = {ConvSpec{8, 3, 1, 1},  ReluSpec{}, MaxPoolSpec{2, 2},
               ConvSpec{16, 3, 1, 1}, ReluSpec{}, MaxPoolSpec{2, 2}, DenseSpec{32}, ReluSpec{}};
  net.feature_dim = 32;
  net.head = std::move(head);
  net.init_seed = seed;
  return net;
}

struct ProbedStore : SampleStore {
  using SampleStore::SampleStore;
  mutable std::set<std::size_t> accessed;
  const std::vector<Box>& boxes(std::size_t i) const override {
    accessed.insert(i);
    return SampleStore::boxes(i);
  }
};

Tensor scalar_tensor(float v) {
  Tensor t({1});
  t[0] = v;
  return t;
}

}  // namespace

TEST_CASE("sgd_step hand examples") {
  // plain gradient step
  std::vector<Tensor> p{scalar_tensor(0.0f)}, g{scalar_tensor(1.0f)}, v{scalar_tensor(0.0f)};
  sgd_step(p, g, v, 0.1, 0.0, 0.0);
  CHECK(p[0][0] == doctest::Approx(-0.1));

  // zero gradient, zero velocity: fixed point
  std::vector<Tensor> p2{scalar_tensor(3.5f)}, g2{scalar_tensor(0.0f)}, v2{scalar_tensor(0.0f)};
  sgd_step(p2, g2, v2, 0.1, 0.9, 0.0);
  CHECK(p2[0][0] == 3.5f);

  // two momentum steps: -0.1 then -0.29
  std::vector<Tensor> p3{scalar_tensor(0.0f)}, g3{scalar_tensor(1.0f)}, v3{scalar_tensor(0.0f)};
  sgd_step(p3, g3, v3, 0.1, 0.9, 0.0);
  CHECK(p3[0][0] == doctest::Approx(-0.1));
  sgd_step(p3, g3, v3, 0.1, 0.9, 0.0);
  CHECK(p3[0][0] == doctest::Approx(-0.29));

  std::vector<Tensor> bad{Tensor({2})};
  CHECK_THROWS_AS(sgd_step(bad, g3, v3, 0.1, 0.9, 0.0), ShapeError);
}

TEST_CASE("lr = 0 leaves parameters bitwise unchanged") {
  const auto dir = dataset_dir("cls2", two_class_cfg());
  SampleStore store(load_manifest((dir / "manifest.jsonl").string()));
  auto net = tiny_net(16, ClassificationHead{2}, 33);
  TrainConfig tc;
  tc.lr = 0.0;
  tc.epochs = 2;
  tc.batch_size = 16;
  const auto result = train_classification(store, tc, net);
  const auto fresh = Model::build(net);
  for (std::size_t i = 0; i < fresh.params().size(); ++i)
    CHECK(std::memcmp(fresh.params()[i].data(), result.model.params()[i].data(),
                      sizeof(float) * fresh.params()[i].size()) == 0);
}

TEST_CASE("training is reproducible from config and seed") {
  const auto dir = dataset_dir("cls2", two_class_cfg());
  SampleStore store(load_manifest((dir / "manifest.jsonl").string()));
  auto net = tiny_net(16, ClassificationHead{2}, 17);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 16;
  tc.seed = 99;
  const auto a = train_classification(store, tc, net);
  const auto b = train_classification(store, tc, net);
  REQUIRE(a.log.epochs.size() == b.log.epochs.size());
  for (std::size_t e = 0; e < a.log.epochs.size(); ++e) {
    CHECK(a.log.epochs[e].train_loss == b.log.epochs[e].train_loss);
    CHECK(a.log.epochs[e].val_metric == b.log.epochs[e].val_metric);
  }
  CHECK(a.best_epoch == b.best_epoch);
  for (std::size_t i = 0; i < a.model.params().size(); ++i)
    CHECK(std::memcmp(a.model.params()[i].data(), b.model.params()[i].data(),
                      sizeof(float) * a.model.params()[i].size()) == 0);
}

TEST_CASE("loss on a repeated minibatch is non-increasing over 50 steps") {
  SynthConfig cfg;
  cfg.num_classes = 10;
  cfg.train_images = 4;
  cfg.val_images = 1;
  cfg.image_size = 32;
  cfg.seed = 7;
  const auto dir = dataset_dir("mono32", cfg);
  SampleStore store(load_manifest((dir / "manifest.jsonl").string()));

  NetworkConfig net;
  net.in_channels = 3;
  net.in_h = net.in_w = 32;
  net.trunk = default_trunk();
  net.feature_dim = 128;
  net.head = ClassificationHead{10};
  net.init_seed = 3;
  Model model = Model::build(net);

  Tensor batch({4, 3, 32, 32});
  Tensor targets({4, 10});
  for (int b = 0; b < 4; ++b) {
    const auto& img = store.image(static_cast<std::size_t>(b));
    std::copy(img.data(), img.data() + img.size(), batch.data() + b * img.size());
    targets[b * 10 + store.record(static_cast<std::size_t>(b)).class_id] = 1.0f;
  }

  std::vector<Tensor> velocity;
  for (const auto& p : model.params()) velocity.emplace_back(p.dims());
  double prev = std::numeric_limits<double>::infinity();
  for (int step = 0; step < 50; ++step) {
    ForwardTrace trace;
    const auto logits = model.forward(batch, trace);
    auto res = softmax_xent_soft(logits, targets);
    CHECK(res.loss <= prev + 1e-9);
    prev = res.loss;
    const auto grads = model.backward(trace, res.d_logits);
    sgd_step(model.params(), grads, velocity, 1e-3, 0.0, 0.0);
  }
}

TEST_CASE("detection training never reads boxes of unlabeled records") {
  const auto dir = dataset_dir("det10", ten_class_cfg());
  auto records = load_manifest((dir / "manifest.jsonl").string());
  records = withhold_boxes(std::move(records), {1});  // manifest-level withholding
  ProbedStore store(records);

  auto net = tiny_net(16, BBoxHead{BBoxGrid{4, 4, 2, 1, 0.2, 0.8, 0.5, 2.0, 0.5, 0.5, 0.5, 0.5}}, 21);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 8;
  tc.held_out_classes = {2};  // withheld inside the trainer
  const auto result = train_detection(store, tc, net, DetectionEvalParams{});
  CHECK(result.log.epochs.size() == 1);

  for (const auto i : store.accessed) {
    CHECK(store.record(i).has_bbox_labels);
    if (store.record(i).split == "train") CHECK(store.record(i).class_id != 2);
  }
}

TEST_CASE("withholding every class is rejected") {
  const auto dir = dataset_dir("det10", ten_class_cfg());
  SampleStore store(load_manifest((dir / "manifest.jsonl").string()));
  auto net = tiny_net(16, BBoxHead{BBoxGrid{4, 4, 2, 1, 0.2, 0.8, 0.5, 2.0, 0.5, 0.5, 0.5, 0.5}});
  TrainConfig tc;
  tc.epochs = 1;
  for (int c = 0; c < 10; ++c) tc.held_out_classes.insert(c);
  CHECK_THROWS_AS(train_detection(store, tc, net, DetectionEvalParams{}), DataError);

  TrainConfig tc2;
  tc2.held_out_classes = {77};
  CHECK_THROWS_AS(train_detection(store, tc2, net, DetectionEvalParams{}), DataError);
}

TEST_CASE("two-class shapes are separable within 20 epochs") {
  const auto dir = dataset_dir("cls2", two_class_cfg());
  SampleStore store(load_manifest((dir / "manifest.jsonl").string()));
  auto net = tiny_net(16, ClassificationHead{2}, 11);
  TrainConfig tc;
  tc.lr = 0.05;
  tc.epochs = 20;
  tc.batch_size = 16;
  tc.seed = 4;
  const auto result = train_classification(store, tc, net);
  double best = 1.0;
  for (const auto& e : result.log.epochs) best = std::min(best, e.val_metric);
  CHECK(best < 0.05);
}

TEST_CASE("a single training image is overfit to its cell") {
  SynthConfig cfg;
  cfg.num_classes = 2;
  cfg.train_images = 1;
  cfg.val_images = 1;
  cfg.image_size = 32;
  cfg.max_objects = 1;
  cfg.seed = 12;
  const auto dir = dataset_dir("overfit1", cfg);
  auto records = load_manifest((dir / "manifest.jsonl").string());
  // keep only the training record; no validation split
  std::vector<SampleRecord> train_only;
  for (auto& r : records)
    if (r.split == "train") train_only.push_back(r);
  REQUIRE(train_only.size() == 1);
  const Box truth = train_only[0].boxes.at(0);
  SampleStore store(train_only);

  BBoxGrid grid;  // default 768 cells
  auto net = tiny_net(32, BBoxHead{grid}, 13);
  TrainConfig tc;
  tc.lr = 0.02;
  tc.epochs = 300;
  tc.batch_size = 1;
  const auto result = train_detection(store, tc, net, DetectionEvalParams{});

  const auto dist = predict_distribution(result.model, store.image(0));
  const auto it = std::max_element(dist.probs.begin(), dist.probs.end());
  CHECK(static_cast<int>(it - dist.probs.begin()) == encode(truth, grid));
}

TEST_CASE("classification-initialized detection differs from random init") {
  const auto dir = dataset_dir("det10", ten_class_cfg());
  SampleStore store(load_manifest((dir / "manifest.jsonl").string()));

  auto net_cls = tiny_net(16, ClassificationHead{10}, 41);
  TrainConfig tc_cls;
  tc_cls.epochs = 2;
  tc_cls.batch_size = 16;
  const auto cls = train_classification(store, tc_cls, net_cls);

  auto net_det = tiny_net(16, BBoxHead{BBoxGrid{4, 4, 2, 1, 0.2, 0.8, 0.5, 2.0, 0.5, 0.5, 0.5, 0.5}}, 42);
  TrainConfig tc_det;
  tc_det.epochs = 2;
  tc_det.batch_size = 16;
  const auto from_cls = train_detection(store, tc_det, net_det, DetectionEvalParams{}, &cls.model);
  const auto from_rnd = train_detection(store, tc_det, net_det, DetectionEvalParams{});

  CHECK(from_cls.log.epochs.size() == 2);
  CHECK(from_rnd.log.epochs.size() == 2);
  CHECK(from_cls.log.epochs[0].train_loss != from_rnd.log.epochs[0].train_loss);
}

TEST_CASE("train log csv is written with the metric column") {
  TrainLog log{"top1_error", {{0, 1.5, 0.4, 0.12}, {1, 1.2, 0.3, 0.11}}};
  const auto path = (fs::temp_directory_path() / "objn_trainer_test" / "log.csv").string();
  fs::create_directories(fs::path(path).parent_path());
  write_train_log_csv(log, path);
  std::ifstream is(path);
  std::string header;
  std::getline(is, header);
  CHECK(header == "epoch,train_loss,top1_error,seconds");
  int rows = 0;
  std::string line;
  while (std::getline(is, line)) rows += !line.empty();
  CHECK(rows == 2);
}
