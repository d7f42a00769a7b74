#include <catch2/catch.hpp>

#include <sstream>

#include "drills/training.hpp"
#include "testutil.hpp"

using namespace drills;
using namespace drills::test;

namespace {

Dataset small_f1_data(long n, std::uint64_t seed) {
    return build_dataset(make_test_function("f1", 2, Domain::OmegaA), n, seed);
}

TrainConfig quick_config(long adam_steps, int lbfgs_steps = 0) {
    TrainConfig cfg;
    cfg.adam_max_steps = adam_steps;
    cfg.lbfgs_max_steps = lbfgs_steps;
    cfg.stop_threshold = 5e-5;
    cfg.seed = 42;
    return cfg;
}

}  // namespace

TEST_CASE("train stops immediately when the threshold is already met") {
    Rng rng(1);
    Dataset data = small_f1_data(32, 5);
    Transform t(make_prnn(2, rng));
    Vec before = transform_flatten(t);
    TrainConfig cfg = quick_config(1000, 50);
    cfg.stop_threshold = 1e12;
    auto [model, hist] = train(t, data, make_hyperparams(2, 1), cfg);
    CHECK(model.meta.steps == 0);
    CHECK(model.meta.stopped_early);
    REQUIRE(hist.records.size() == 1);
    CHECK(hist.records[0].step == 0);
    CHECK(transform_flatten(model.transform) == before);
}

TEST_CASE("short training run on f1") {
    Rng rng(2);
    Dataset data = small_f1_data(64, 9);
    Transform t(make_prnn(2, rng));
    HyperParams hp = make_hyperparams(2, 1, 1.0, 0.0, 50.0);
    TrainConfig cfg = quick_config(300, 20);
    auto [model, hist] = train(t, data, hp, cfg);

    SECTION("loss decreases and history is consistent") {
        REQUIRE(hist.records.size() > 2);
        CHECK(hist.records.back().total <= hist.records.front().total);
        long prev = -1;
        for (const LossRecord& r : hist.records) {
            CHECK(r.step > prev);
            prev = r.step;
            CHECK(r.total == r.l1 + hp.lambda1 * r.l2 + hp.lambda2 * r.l3);
        }
        CHECK(model.meta.final_loss == Approx(loss_total(model.transform, data, hp).first));
    }
    SECTION("training is deterministic") {
        Rng rng2(2);
        Transform t2(make_prnn(2, rng2));
        auto [model2, hist2] = train(t2, data, hp, cfg);
        CHECK(transform_flatten(model2.transform) == transform_flatten(model.transform));
        REQUIRE(hist2.records.size() == hist.records.size());
        for (std::size_t i = 0; i < hist.records.size(); ++i) {
            CHECK(hist2.records[i].step == hist.records[i].step);
            CHECK(hist2.records[i].total == hist.records[i].total);
        }
    }
}

TEST_CASE("mini-batch training is deterministic and records full-loss checks") {
    Rng rng(3);
    Dataset data = small_f1_data(64, 10);
    HyperParams hp = make_hyperparams(2, 1);
    TrainConfig cfg = quick_config(120);
    cfg.batch_size = 16;
    cfg.stop_check_every = 40;
    Transform t(make_prnn(2, rng));
    auto [m1, h1] = train(t, data, hp, cfg);
    Rng rng2(3);
    Transform t2(make_prnn(2, rng2));
    auto [m2, h2] = train(t2, data, hp, cfg);
    CHECK(transform_flatten(m1.transform) == transform_flatten(m2.transform));
    REQUIRE(h1.records.size() == h2.records.size());
    for (std::size_t i = 0; i < h1.records.size(); ++i)
        CHECK(h1.records[i].total == h2.records[i].total);
}

TEST_CASE("RevNet trains under the L2-only objective") {
    Rng rng(4);
    Dataset data = small_f1_data(48, 12);
    Transform t(make_revnet(2, rng, 6, 2));
    HyperParams hp = make_hyperparams(2, 1, 1.0, 0.0, 50.0);
    auto [model, hist] = train(t, data, hp, quick_config(200, 10));
    CHECK(hist.records.back().l1 == 0.0);
    CHECK(hist.records.back().total <= hist.records.front().total);
}

TEST_CASE("loss history CSV schema") {
    LossHistory h;
    h.records.push_back({0, TrainPhase::Adam, 1.5, 1.0, 0.5, 0.0});
    h.records.push_back({10, TrainPhase::Lbfgs, 0.25, 0.25, 0.0, 0.0});
    std::ostringstream os;
    h.write_csv(os);
    CHECK(os.str() ==
          "step,phase,total,L1,L2,L3\n"
          "0,adam,1.5,1,0.5,0\n"
          "10,lbfgs,0.25,0.25,0,0\n");
}
