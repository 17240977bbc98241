#include <doctest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "jobgen/common/error.hpp"
#include "jobgen/recsys/recsys.hpp"
#include "jobgen/tensor/gradcheck.hpp"

using namespace jobgen;
using namespace jobgen::recsys;
using jobgen::tensor::Shape;
using jobgen::tensor::Tensor;

namespace {

RecModelConfig toy_config(PredictorKind kind, bool enhanced, std::size_t width = 8) {
  RecModelConfig c;
  c.encoder.vocab_size = 12;
  c.encoder.max_seq_len = 16;
  c.encoder.width = width;
  c.encoder.layers = 1;
  c.encoder.heads = 2;
  c.encoder.ff_width = 2 * width;
  c.encoder.init_std = 0.3;
  c.predictor = kind;
  c.enhanced = enhanced;
  c.hidden = 2 * width;
  return c;
}

Tokens random_tokens(Rng& rng) {
  Tokens t;
  const std::size_t len = 2 + rng.below(4);
  for (std::size_t k = 0; k < len; ++k) t.push_back(static_cast<TokenId>(3 + rng.below(9)));
  return t;
}

// Label is 1 iff the CV and JD share their first token.
std::vector<RecInstance> toy_data(std::size_t n, std::size_t generated, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<RecInstance> out;
  for (std::size_t i = 0; i < n; ++i) {
    RecInstance x;
    x.cv = random_tokens(rng);
    x.jd = random_tokens(rng);
    if (i % 2 == 0) x.jd[0] = x.cv[0];
    x.label = x.cv[0] == x.jd[0] ? 1 : 0;
    for (std::size_t g = 0; g < generated; ++g) x.generated.push_back(random_tokens(rng));
    out.push_back(std::move(x));
  }
  return out;
}

Var row(Tape& tape, std::vector<double> v) {
  const std::size_t w = v.size();
  return tensor::constant(tape, Tensor(Shape{1, w}, std::move(v)));
}

std::vector<double> values(const Var& v) {
  const auto d = v.value().data();
  return {d.begin(), d.end()};
}

void zero(tensor::ParameterStore& store, const std::string& name) {
  for (double& v : store.get(name).value.data()) v = 0.0;
}

RecTrainConfig toy_training(std::size_t epochs) {
  RecTrainConfig c;
  c.epochs = epochs;
  c.batch_size = 8;
  c.learning_rate = 3e-3;
  c.patience = epochs;
  c.seed = 4;
  return c;
}

}  // namespace

TEST_CASE("predictor kind names") {
  CHECK(to_string(PredictorKind::mlp) == "mlp");
  CHECK(to_string(PredictorKind::dot) == "dot");
  CHECK(predictor_kind_from_string("dot") == PredictorKind::dot);
  CHECK(predictor_kind_from_string("mlp") == PredictorKind::mlp);
  CHECK_THROWS_AS((void)predictor_kind_from_string("cosine"), ConfigError);
}

TEST_CASE("config serialization round-trips") {
  auto c = toy_config(PredictorKind::dot, true);
  c.twin_encoder = true;
  const nlohmann::json j = c;
  const auto back = j.get<RecModelConfig>();
  CHECK(nlohmann::json(back) == j);
  RecTrainConfig t;
  t.patience = 7;
  CHECK(nlohmann::json(nlohmann::json(t).get<RecTrainConfig>()) == nlohmann::json(t));
  t.patience = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  c.hidden = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("fusing generated embeddings is a coordinate-wise mean") {
  Tape tape;
  const std::vector<double> v{0.5, -1.25, 3.0, 2.0};
  const std::vector<double> neg{-0.5, 1.25, -3.0, -2.0};
  {
    const std::array<Var, 1> one{row(tape, v)};
    CHECK(values(fuse_generated(one)) == v);
  }
  {
    const std::array<Var, 2> pair{row(tape, v), row(tape, neg)};
    CHECK(values(fuse_generated(pair)) == std::vector<double>(4, 0.0));
  }
  {
    const std::array<Var, 4> copies{row(tape, v), row(tape, v), row(tape, v), row(tape, v)};
    CHECK(values(fuse_generated(copies)) == v);
  }
  Rng rng(1);
  std::vector<std::vector<double>> xs(5, std::vector<double>(6));
  for (auto& x : xs)
    for (double& e : x) e = rng.normal(0.0, 1.0);
  const auto forward = fuse_generated(xs);
  std::vector<std::vector<double>> reversed(xs.rbegin(), xs.rend());
  const auto backward = fuse_generated(reversed);
  std::vector<Var> vars;
  for (const auto& x : xs) vars.push_back(row(tape, x));
  const auto on_tape = values(fuse_generated(vars));
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(forward[i] == doctest::Approx(backward[i]).epsilon(1e-14));
    CHECK(forward[i] == doctest::Approx(on_tape[i]).epsilon(1e-14));
  }
  CHECK_THROWS_AS((void)fuse_generated(std::span<const Var>{}), ConfigError);
  CHECK_THROWS_AS((void)fuse_generated(std::span<const std::vector<double>>{}), ConfigError);
  const std::array<Var, 2> ragged{row(tape, v), row(tape, {1.0, 2.0})};
  CHECK_THROWS_AS((void)fuse_generated(ragged), ShapeError);
}

TEST_CASE("dot predictor is a bilinear form") {
  const RecModel model(toy_config(PredictorKind::dot, false), 3);
  Tape tape;
  const std::vector<double> c{0.3, -1.0, 2.0, 0.5, 0.0, 1.5, -0.25, 0.75};
  const std::vector<double> j{1.0, 0.5, -0.5, 2.0, 3.0, -1.0, 0.25, 0.0};
  double dot = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) dot += c[i] * j[i];
  CHECK(model.base_logit(tape, row(tape, c), row(tape, j)).value().item() == doctest::Approx(dot).epsilon(1e-15));
  CHECK(model.base_logit(tape, row(tape, c), row(tape, std::vector<double>(8, 0.0))).value().item() == 0.0);
  CHECK(model.base_logit(tape, row(tape, c), row(tape, j)).value().item() ==
        model.base_logit(tape, row(tape, j), row(tape, c)).value().item());
  std::vector<double> c3 = c;
  for (double& v : c3) v *= 3.0;
  CHECK(model.base_logit(tape, row(tape, c3), row(tape, j)).value().item() ==
        doctest::Approx(3.0 * dot).epsilon(1e-14));
}

TEST_CASE("zeroed output layers give probability one half") {
  const auto data = toy_data(10, 2, 5);
  for (bool enhanced : {false, true}) {
    RecModel model(toy_config(PredictorKind::mlp, enhanced), 3);
    zero(model.parameters(), "head.w2");
    zero(model.parameters(), "head.b2");
    for (const auto& x : data) CHECK(model.probability(x) == 0.5);
  }
  // Dot predictor whose JD embedding is zero.
  const RecModel dot(toy_config(PredictorKind::dot, false), 3);
  Tape tape;
  Var c = dot.embed_cv(tape, data[0].cv);
  Var z = tensor::constant(tape, Tensor(Shape{1, 8}, 0.0));
  const double raw = dot.base_logit(tape, c, z).value().item();
  CHECK(raw == 0.0);
  CHECK(1.0 / (1.0 + std::exp(-raw)) == 0.5);
}

TEST_CASE("identity fusion reduces enhanced dot scoring to the base score") {
  const std::size_t w = 8;
  RecModel model(toy_config(PredictorKind::dot, true, w), 3);
  auto& s = model.parameters();
  // c' = relu(c) - relu(-c) = c.
  Tensor w1(Shape{2 * w, 2 * w}, 0.0), w2(Shape{2 * w, w}, 0.0);
  for (std::size_t i = 0; i < w; ++i) {
    w1.data()[i * 2 * w + i] = 1.0;
    w1.data()[i * 2 * w + w + i] = -1.0;
    w2.data()[i * w + i] = 1.0;
    w2.data()[(w + i) * w + i] = -1.0;
  }
  s.get("fusion.w1").value = w1;
  s.get("fusion.w2").value = w2;
  zero(s, "fusion.b1");
  zero(s, "fusion.b2");
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    Tape tape;
    Var c = model.embed_cv(tape, random_tokens(rng));
    Var j = model.embed_jd(tape, random_tokens(rng));
    Var none = tensor::constant(tape, Tensor(Shape{1, w}, 0.0));
    CHECK(model.enhanced_logit(tape, c, j, none).value().item() ==
          doctest::Approx(model.base_logit(tape, c, j).value().item()).epsilon(1e-14));
  }
}

TEST_CASE("with enhancement off the model scores exactly like the base model") {
  const auto data = toy_data(12, 3, 7);
  for (auto kind : {PredictorKind::mlp, PredictorKind::dot}) {
    const RecModel model(toy_config(kind, false), 3);
    for (const auto& x : data) {
      RecInstance bare = x;
      bare.generated.clear();
      Tape tape;
      const double direct = model.base_logit(tape, model.embed_cv(tape, x.cv), model.embed_jd(tape, x.jd)).value().item();
      CHECK(model.logit(tape, x).value().item() == direct);
      CHECK(model.probability(x) == model.probability(bare));
    }
  }
  // An enhanced dot model shares its encoder initialization with the base
  // model built from the same seed.
  const RecModel base(toy_config(PredictorKind::dot, false), 3);
  const RecModel enhanced(toy_config(PredictorKind::dot, true), 3);
  for (const auto& x : data) {
    Tape a, b;
    CHECK(base.logit(a, x).value().item() ==
          enhanced.base_logit(b, enhanced.embed_cv(b, x.cv), enhanced.embed_jd(b, x.jd)).value().item());
  }
}

TEST_CASE("a warm-started enhanced mlp scores exactly like its base model") {
  const auto data = toy_data(12, 3, 9);
  RecModel base(toy_config(PredictorKind::mlp, false), 3);
  (void)train_rec(base, data, data, toy_training(2));
  RecModel enhanced(toy_config(PredictorKind::mlp, true), 5);
  enhanced.warm_start(base);
  for (const auto& x : data) CHECK(enhanced.probability(x) == base.probability(x));

  CHECK_THROWS_AS(enhanced.warm_start(enhanced), ConfigError);
  RecModel dot(toy_config(PredictorKind::dot, true), 5);
  CHECK_THROWS_AS(dot.warm_start(base), ConfigError);
}

TEST_CASE("enhanced scoring needs generated JDs") {
  RecInstance x = toy_data(1, 0, 8)[0];
  for (auto kind : {PredictorKind::mlp, PredictorKind::dot}) {
    const RecModel model(toy_config(kind, true), 3);
    CHECK_THROWS_AS((void)model.probability(x), ConfigError);
    Tape tape;
    Var c = model.embed_cv(tape, x.cv);
    CHECK_THROWS_AS((void)RecModel(toy_config(kind, false), 3).enhanced_logit(tape, c, c, c), ConfigError);
  }
}

TEST_CASE("binary cross-entropy values and gradient") {
  Tape tape;
  CHECK(bce_loss(tensor::constant(tape, Tensor(Shape{1, 1}, 0.0)), 1).value().item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
  for (double s : {-30.0, -2.0, 0.7, 4.0, 30.0}) {
    Var l1 = bce_loss(tensor::constant(tape, Tensor(Shape{1, 1}, s)), 1);
    Var l0 = bce_loss(tensor::constant(tape, Tensor(Shape{1, 1}, s)), 0);
    CHECK(l1.value().item() == doctest::Approx(std::log1p(std::exp(-s))).epsilon(1e-12));
    CHECK(l0.value().item() == doctest::Approx(std::log1p(std::exp(s))).epsilon(1e-12));
  }
  CHECK_THROWS_AS((void)bce_loss(tensor::constant(tape, Tensor(Shape{1, 1}, 0.0)), 2), ConfigError);
  for (double s : {-3.0, 0.4, 2.5}) {
    for (int z : {0, 1}) {
      const double err = tensor::finite_difference_check([z](Tape&, Var x) { return bce_loss(x, z); },
                                                         Tensor(Shape{1, 1}, s));
      CHECK(err < 1e-6);
    }
  }
}

TEST_CASE("recommendation loss gradients match finite differences") {
  const auto data = toy_data(2, 2, 9);
  for (auto kind : {PredictorKind::mlp, PredictorKind::dot}) {
    for (bool enhanced : {false, true}) {
      auto cfg = toy_config(kind, enhanced, 4);
      cfg.encoder.init_std = 0.5;
      RecModel model(cfg, 10);
      const auto params = model.parameters().pointers();
      const double err = tensor::parameter_gradient_check(
          [&](Tape& tape) {
            return add(bce_loss(model.logit(tape, data[0]), data[0].label),
                       bce_loss(model.logit(tape, data[1]), data[1].label));
          },
          params);
      CAPTURE(to_string(kind));
      CAPTURE(enhanced);
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("all-positive labels drive the training loss down") {
  auto data = toy_data(32, 0, 11);
  for (auto& x : data) x.label = 1;
  auto val = toy_data(8, 0, 12);
  RecModel model(toy_config(PredictorKind::mlp, false), 3);
  auto cfg = toy_training(30);
  cfg.learning_rate = 1e-2;
  const auto r = train_rec(model, data, val, cfg);
  REQUIRE(r.epochs.size() == 30);
  CHECK(r.epochs.back().train_loss < 0.1);
}

TEST_CASE("training learns the toy rule and restores the best epoch") {
  const auto train = toy_data(200, 1, 13), val = toy_data(60, 1, 14);
  for (auto kind : {PredictorKind::mlp, PredictorKind::dot}) {
    RecModel model(toy_config(kind, false), 3);
    const double before = evaluate(model, val).auc;
    auto cfg = toy_training(8);
    const auto r = train_rec(model, train, val, cfg);
    CAPTURE(to_string(kind));
    CHECK(r.best_val_auc > before);
    CHECK(r.best_val_auc > 0.6);
    CHECK(evaluate(model, val).auc == r.best_val_auc);
  }
}

TEST_CASE("early stopping halts after the patience window") {
  const auto train = toy_data(40, 0, 15), val = toy_data(20, 0, 16);
  RecModel model(toy_config(PredictorKind::dot, false), 3);
  auto cfg = toy_training(50);
  cfg.patience = 2;
  cfg.learning_rate = 0.3;
  const auto r = train_rec(model, train, val, cfg);
  CHECK(r.epochs.size() < 50);
  CHECK(r.epochs.size() - r.best_epoch == 2);
}

TEST_CASE("training is deterministic and resumes exactly") {
  const auto train = toy_data(48, 2, 17), val = toy_data(16, 2, 18);
  const auto cfg = toy_training(4);
  RecModel a(toy_config(PredictorKind::dot, true), 3);
  tensor::Checkpoint saved;
  RecHooks hooks;
  MetricsLog log_a;
  hooks.log = &log_a;
  hooks.on_epoch = [&](const RecProgress& p) {
    if (p.epoch != 2) return;
    saved = a.to_checkpoint();
    add_progress(saved, p);
  };
  const auto ra = train_rec(a, train, val, cfg, hooks);

  RecModel b(toy_config(PredictorKind::dot, true), 3);
  const auto rb = train_rec(b, train, val, cfg);
  CHECK(a.parameters().checksum() == b.parameters().checksum());

  REQUIRE(has_progress(saved));
  RecModel c = RecModel::from_checkpoint(saved);
  const auto progress = read_progress(saved);
  CHECK(progress.epoch == 2);
  RecHooks resume;
  resume.resume = &progress;
  const auto rc = train_rec(c, train, val, cfg, resume);
  CHECK(c.parameters().checksum() == a.parameters().checksum());
  REQUIRE(rc.epochs.size() == ra.epochs.size());
  for (std::size_t i = 0; i < ra.epochs.size(); ++i) {
    CHECK(rc.epochs[i].train_loss == ra.epochs[i].train_loss);
    CHECK(rc.epochs[i].val_auc == ra.epochs[i].val_auc);
  }
  CHECK(rc.best_epoch == ra.best_epoch);
  CHECK(log_a.records().size() == 5);
}

TEST_CASE("checkpoint round-trip keeps scores") {
  const auto data = toy_data(5, 2, 19);
  RecModel m(toy_config(PredictorKind::mlp, true), 3);
  const auto back = RecModel::from_checkpoint(m.to_checkpoint());
  for (const auto& x : data) CHECK(back.probability(x) == m.probability(x));
  tensor::Checkpoint wrong = m.to_checkpoint();
  wrong.role = "encoder";
  CHECK_THROWS_AS((void)RecModel::from_checkpoint(wrong), ConfigError);
}

TEST_CASE("offline generation, cache and instances") {
  const corpus::World world(corpus::SkillOntology::standard());
  models::TransformerConfig gc;
  gc.vocab_size = world.vocabulary().size();
  gc.max_seq_len = 64;
  gc.width = 8;
  gc.layers = 1;
  gc.heads = 2;
  gc.ff_width = 16;
  const models::GeneratorModel generator(gc, 20);
  models::SamplingConfig sampling;
  sampling.max_new_tokens = 6;
  Rng rng(21);
  std::vector<corpus::CVDoc> cvs;
  for (std::uint64_t id = 100; id < 105; ++id) cvs.push_back(world.sample_cv(rng, id));

  const auto gens = generate_for_cvs(generator, world, cvs, 4, sampling, 22);
  REQUIRE(gens.size() == 20);
  for (std::size_t i = 0; i < gens.size(); ++i) {
    CHECK(gens[i].seeker_id == cvs[i / 4].seeker_id);
    CHECK(gens[i].index == i % 4);
    CHECK((gens[i].hit_eos || gens[i].tokens.size() == sampling.max_new_tokens));
  }
  const auto again = generate_for_cvs(generator, world, cvs, 4, sampling, 22);
  for (std::size_t i = 0; i < gens.size(); ++i) CHECK(again[i].tokens == gens[i].tokens);
  // Sample i of a seeker does not depend on how many samples were drawn.
  const auto one = generate_for_cvs(generator, world, cvs, 1, sampling, 22);
  for (std::size_t k = 0; k < cvs.size(); ++k) CHECK(one[k].tokens == gens[4 * k].tokens);

  const auto dir = std::filesystem::temp_directory_path() / "jobgen_test_recsys";
  std::filesystem::create_directories(dir);
  const auto path = dir / "generations.jsonl";
  save_generations(path, gens);
  {
    std::ofstream f(path, std::ios::app);
    f << "{not json\n" << R"({"schema": "jobgen.generation.v1", "seeker_id": 1})" << "\n" << R"({"seeker_id": 2})" << "\n";
  }
  const auto loaded = load_generations(path);
  CHECK(loaded.rows.size() == gens.size());
  CHECK(loaded.warnings.size() == 3);
  CHECK(loaded.warnings[0].rfind("line 21:", 0) == 0);
  for (std::size_t i = 0; i < gens.size(); ++i) CHECK(loaded.rows[i].tokens == gens[i].tokens);
  CHECK_THROWS_AS((void)load_generations(dir / "absent.jsonl"), MissingPrerequisite);

  const GenerationCache cache(loaded.rows);
  CHECK(cache.seekers() == 5);
  CHECK(cache.first(102, 2).size() == 2);
  CHECK_THROWS_AS((void)cache.first(102, 5), MissingPrerequisite);
  CHECK_THROWS_AS((void)cache.first(999, 1), MissingPrerequisite);

  std::vector<corpus::RecExample> split(2);
  split[0].cv = cvs[1];
  split[0].label = 1;
  split[1].cv = cvs[3];
  split[1].cold = true;
  const auto xs = make_instances(split, &cache, 3);
  CHECK(xs[0].generated.size() == 3);
  CHECK(xs[0].generated[2] == gens[4 + 2].tokens);
  CHECK(xs[0].label == 1);
  CHECK(xs[1].cold);
  CHECK(make_instances(split, nullptr, 0)[0].generated.empty());
  CHECK_THROWS_AS((void)make_instances(split, nullptr, 1), ConfigError);
  std::filesystem::remove_all(dir);
}
