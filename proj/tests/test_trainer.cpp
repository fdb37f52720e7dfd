#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "crossview/errors.hpp"
#include "crossview/evalsuite.hpp"
#include "crossview/trainer.hpp"

using namespace crossview;
using namespace crossview::trainer;

namespace {

scenegen::Dataset tiny_dataset(std::uint64_t seed, int train = 8, int val = 2, int test = 2) {
    scenegen::GenConfig c;
    c.train_scenes = train;
    c.val_scenes = val;
    c.test_scenes = test;
    c.min_objects = 2;
    c.max_objects = 5;
    return scenegen::generate_dataset(c, seed);
}

gradnet::NetConfig small_net(const scenegen::Dataset& ds) {
    gradnet::NetConfig nc;
    nc.dims = {ds.patch_floats(), 32, 16, 8};
    return nc;
}

}  // namespace

TEST_CASE("mode and optimizer names round trip") {
    for (Mode m : {Mode::unsupervised, Mode::supervised, Mode::frozen}) {
        CHECK(mode_from_name(mode_name(m)) == m);
    }
    CHECK_THROWS_AS(mode_from_name("offline"), ConfigError);
    for (Optimizer o : {Optimizer::adam, Optimizer::sgd_momentum}) {
        CHECK(optimizer_from_name(optimizer_name(o)) == o);
    }
    CHECK_THROWS_AS(optimizer_from_name("rmsprop"), ConfigError);
}

TEST_CASE("train config validation") {
    TrainConfig c;
    c.validate();
    c.learning_rate = 0.0;  // frozen-equivalent runs are allowed
    c.validate();
    c.steps = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.steps = 1;
    c.pairs_per_step = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.pairs_per_step = 1;
    c.learning_rate = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.learning_rate = std::nan("");
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.learning_rate = 1e-3;
    c.eval_every = -1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("optimizer steps on hand-checked arithmetic") {
    TrainConfig cfg;
    cfg.optimizer = Optimizer::sgd_momentum;
    cfg.learning_rate = 1.0;
    OptState state;
    std::vector<double> params = {0.0};
    const std::vector<double> grads = {1.0};
    step_optimizer(params, grads, state, cfg);
    CHECK(params[0] == -1.0);  // v = 1
    step_optimizer(params, grads, state, cfg);
    CHECK(params[0] == static_cast<double>(static_cast<float>(-2.9)));  // v = 1.9

    SUBCASE("adam first step moves by about lr in the gradient direction") {
        TrainConfig adam;
        adam.optimizer = Optimizer::adam;
        adam.learning_rate = 0.01;
        for (double g : {2.0, -2.0, 0.5, -0.5}) {
            OptState st;
            std::vector<double> p = {0.25};
            step_optimizer(p, {g}, st, adam);
            const double want = 0.25 - 0.01 * (g > 0 ? 1.0 : -1.0);
            CHECK(std::abs(p[0] - want) < 1e-6);
        }
    }

    SUBCASE("zero gradient leaves parameters bitwise unchanged") {
        for (Optimizer o : {Optimizer::adam, Optimizer::sgd_momentum}) {
            TrainConfig c2;
            c2.optimizer = o;
            OptState st;
            std::vector<double> p = {0.25, -1.5, static_cast<double>(0.7f)};
            const std::vector<double> before = p;
            step_optimizer(p, {0.0, 0.0, 0.0}, st, c2);
            CHECK(p == before);
        }
    }

    SUBCASE("mismatched vector lengths throw") {
        OptState st;
        std::vector<double> p = {1.0, 2.0};
        CHECK_THROWS_AS(step_optimizer(p, {1.0}, st, cfg), ShapeError);
    }
}

TEST_CASE("frozen mode never touches parameters") {
    const scenegen::Dataset ds = tiny_dataset(1);
    gradnet::EmbeddingNet net = gradnet::EmbeddingNet::init_random(small_net(ds), 5);
    const std::vector<double> before = net.params();
    TrainConfig cfg;
    cfg.mode = Mode::frozen;
    cfg.steps = 5;
    cfg.pairs_per_step = 2;
    cfg.seed = 3;
    const TrainTrace trace = train(ds, net, cfg);
    CHECK(net.params() == before);
    CHECK(trace.losses.size() == 5);
    CHECK(trace.final_checksum == gradnet::param_checksum(net));
    for (double l : trace.losses) {
        CHECK(std::isfinite(l));
        CHECK(l >= 0.0);
    }

    // Same sampling stream: an unsupervised run sees the same first batch.
    gradnet::EmbeddingNet net2 = gradnet::EmbeddingNet::init_random(small_net(ds), 5);
    TrainConfig cfg2 = cfg;
    cfg2.mode = Mode::unsupervised;
    const TrainTrace trace2 = train(ds, net2, cfg2);
    CHECK(trace2.losses[0] == trace.losses[0]);
}

TEST_CASE("zero learning rate trains without changing parameters") {
    const scenegen::Dataset ds = tiny_dataset(2);
    gradnet::EmbeddingNet net = gradnet::EmbeddingNet::init_random(small_net(ds), 6);
    const std::vector<double> before = net.params();
    TrainConfig cfg;
    cfg.steps = 1;
    cfg.learning_rate = 0.0;
    cfg.seed = 4;
    const TrainTrace trace = train(ds, net, cfg);
    CHECK(trace.losses.size() == 1);
    CHECK(net.params() == before);
}

TEST_CASE("training reproduces bitwise from the seed") {
    const scenegen::Dataset ds = tiny_dataset(3);
    TrainConfig cfg;
    cfg.steps = 8;
    cfg.pairs_per_step = 2;
    cfg.seed = 11;
    gradnet::EmbeddingNet a = gradnet::EmbeddingNet::init_random(small_net(ds), 7);
    gradnet::EmbeddingNet b = gradnet::EmbeddingNet::init_random(small_net(ds), 7);
    const TrainTrace ta = train(ds, a, cfg);
    const TrainTrace tb = train(ds, b, cfg);
    CHECK(ta.losses == tb.losses);
    CHECK(ta.final_checksum == tb.final_checksum);
    CHECK(a.params() == b.params());

    gradnet::EmbeddingNet c = gradnet::EmbeddingNet::init_random(small_net(ds), 7);
    TrainConfig other = cfg;
    other.seed = 12;
    const TrainTrace tc = train(ds, c, other);
    CHECK(ta.losses != tc.losses);
}

TEST_CASE("supervised and unsupervised modes differ but both run") {
    const scenegen::Dataset ds = tiny_dataset(4);
    TrainConfig cfg;
    cfg.steps = 4;
    cfg.seed = 13;
    gradnet::EmbeddingNet u = gradnet::EmbeddingNet::init_random(small_net(ds), 8);
    cfg.mode = Mode::unsupervised;
    const TrainTrace tu = train(ds, u, cfg);
    gradnet::EmbeddingNet s = gradnet::EmbeddingNet::init_random(small_net(ds), 8);
    cfg.mode = Mode::supervised;
    const TrainTrace ts = train(ds, s, cfg);
    CHECK(tu.losses.size() == ts.losses.size());
    for (double l : ts.losses) {
        CHECK(std::isfinite(l));
    }
}

TEST_CASE("loss decreases over a short run") {
    const scenegen::Dataset ds = tiny_dataset(5, 16, 2, 2);
    gradnet::EmbeddingNet net = gradnet::EmbeddingNet::init_random(small_net(ds), 9);
    TrainConfig cfg;
    cfg.steps = 80;
    cfg.pairs_per_step = 4;
    cfg.learning_rate = 1e-3;
    cfg.seed = 14;
    const TrainTrace trace = train(ds, net, cfg);
    REQUIRE(trace.losses.size() == 80);
    double head = 0.0, tail = 0.0;
    for (int i = 0; i < 20; ++i) {
        head += trace.losses[static_cast<std::size_t>(i)];
        tail += trace.losses[static_cast<std::size_t>(60 + i)];
    }
    CHECK(tail < head);
}

TEST_CASE("non-finite parameters surface as a numeric error") {
    const scenegen::Dataset ds = tiny_dataset(6);
    gradnet::EmbeddingNet net = gradnet::EmbeddingNet::init_random(small_net(ds), 10);
    net.mutable_params()[0] = std::nan("");
    TrainConfig cfg;
    cfg.steps = 1;
    CHECK_THROWS_AS(train(ds, net, cfg), NumericError);
}

TEST_CASE("dataset and net shapes are validated") {
    const scenegen::Dataset ds = tiny_dataset(7);
    gradnet::NetConfig wrong;
    wrong.dims = {100, 16, 8};
    gradnet::EmbeddingNet net = gradnet::EmbeddingNet::init_random(wrong, 11);
    TrainConfig cfg;
    CHECK_THROWS_AS(train(ds, net, cfg), ShapeError);

    scenegen::Dataset no_train = tiny_dataset(8);
    for (auto& s : no_train.scene_split) {
        s = scenegen::Split::test;
    }
    gradnet::EmbeddingNet net2 = gradnet::EmbeddingNet::init_random(small_net(no_train), 12);
    CHECK_THROWS_AS(train(no_train, net2, cfg), ConfigError);
}

TEST_CASE("periodic validation snapshots are recorded") {
    const scenegen::Dataset ds = tiny_dataset(9);
    gradnet::EmbeddingNet net = gradnet::EmbeddingNet::init_random(small_net(ds), 13);
    TrainConfig cfg;
    cfg.steps = 10;
    cfg.eval_every = 5;
    cfg.seed = 15;
    const TrainTrace trace = train(ds, net, cfg);
    REQUIRE(trace.evals.size() == 2);
    CHECK(trace.evals[0].step == 5);
    CHECK(trace.evals[1].step == 10);
    CHECK(std::isfinite(trace.evals[0].value));
    CHECK(std::isfinite(trace.evals[1].value));
}

TEST_CASE("trace csv lists steps from zero") {
    TrainTrace trace;
    trace.losses = {1.5, 0.25, 0.125};
    const std::string csv = trace_csv(trace);
    std::istringstream in(csv);
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "step,loss");
    REQUIRE(std::getline(in, line));
    CHECK(line == "0,1.5");
    REQUIRE(std::getline(in, line));
    CHECK(line == "1,0.25");
    REQUIRE(std::getline(in, line));
    CHECK(line == "2,0.125");
    CHECK_FALSE(std::getline(in, line));
}

TEST_CASE("train_on_frames rejects an empty list") {
    scenegen::GenConfig c;
    gradnet::NetConfig nc;
    nc.dims = {c.patch_size * c.patch_size * 3, 16, 8};
    gradnet::EmbeddingNet net = gradnet::EmbeddingNet::init_random(nc, 14);
    TrainConfig cfg;
    CHECK_THROWS_AS(train_on_frames({}, net, cfg), ConfigError);
}

TEST_CASE("online protocol validation") {
    OnlineProtocol p;
    p.validate();
    p.prefix_fractions = {};
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p.prefix_fractions = {0.0, 0.5};
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p.prefix_fractions = {0.5, 0.5};
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p.prefix_fractions = {0.5, 0.2};
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p.prefix_fractions = {0.2, 1.2};
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p.prefix_fractions = {0.2, 0.9};  // overlaps the default 0.2 suffix
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p.prefix_fractions = {0.2, 0.8};
    p.validate();
    p.eval_suffix_fraction = 0.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p.eval_suffix_fraction = 1.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("online protocol trains per prefix and reports suffix errors") {
    scenegen::GenConfig c;
    c.p_occlusion = 0.0;
    const scenegen::SceneSpec scene = scenegen::make_scene_fixed_objects(c, 0, 4, 77);
    const auto sequence = scenegen::make_sequence(scene, c, 20, 78);

    gradnet::NetConfig nc;
    nc.dims = {c.patch_size * c.patch_size * 3, 32, 16, 8};
    const gradnet::EmbeddingNet net = gradnet::EmbeddingNet::init_random(nc, 15);

    TrainConfig cfg;
    cfg.steps = 6;
    cfg.pairs_per_step = 2;
    cfg.seed = 16;
    OnlineProtocol protocol;
    protocol.prefix_fractions = {0.2, 0.5};
    protocol.eval_suffix_fraction = 0.25;

    const OnlineResult r = run_online(sequence, net, cfg, protocol);
    REQUIRE(r.prefixes.size() == 2);
    CHECK(r.prefixes[0].fraction == 0.2);
    CHECK(r.prefixes[0].train_frames == 4);
    CHECK(r.prefixes[1].train_frames == 10);
    for (const OnlinePrefixResult& pr : r.prefixes) {
        CHECK(pr.error_early >= 0.0);
        CHECK(pr.error_early <= 1.0);
        CHECK(pr.error_full >= 0.0);
        CHECK(pr.error_full <= 1.0);
        CHECK(pr.error == std::min(pr.error_early, pr.error_full));
    }

    // The frozen baseline equals a direct evaluation of the same split.
    const auto gallery = evalsuite::build_gallery(sequence);
    const std::vector<scenegen::PairBatch> suffix(sequence.begin() + 15, sequence.end());
    CHECK(r.frozen_error == evalsuite::identification_error(net, gallery, suffix));

    const OnlineResult again = run_online(sequence, net, cfg, protocol);
    CHECK(again.frozen_error == r.frozen_error);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(again.prefixes[i].error_early == r.prefixes[i].error_early);
        CHECK(again.prefixes[i].error_full == r.prefixes[i].error_full);
    }

    CHECK_THROWS_AS(run_online({}, net, cfg, protocol), ConfigError);
    OnlineProtocol too_small = protocol;
    too_small.prefix_fractions = {0.01, 0.5};
    CHECK_THROWS_AS(run_online(sequence, net, cfg, too_small), ConfigError);
}
