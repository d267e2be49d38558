#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>
#include <string>

#include "glf/config.hpp"
#include "glf/errors.hpp"

using namespace glf;

namespace {

std::string msg_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const ConfigError& e) {
        return e.what();
    } catch (const IoError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("defaults validate and survive a serialize/parse round trip") {
    cfg::RunConfig rc;
    rc.validate();

    const std::string text = rc.serialize();
    cfg::RunConfig back = cfg::parse_config(text, "round");
    back.validate();

    CHECK(back.seed == rc.seed);
    CHECK(back.model == rc.model);
    CHECK(back.events == rc.events);
    CHECK(back.spec.noise == rc.spec.noise);
    REQUIRE(back.spec.modes.size() == rc.spec.modes.size());
    for (std::size_t i = 0; i < rc.spec.modes.size(); ++i) {
        CHECK(back.spec.modes[i].freq == rc.spec.modes[i].freq);
        CHECK(back.spec.modes[i].amp == rc.spec.modes[i].amp);
    }
    CHECK(back.ratio.train == rc.ratio.train);
    CHECK(back.d_model == rc.d_model);
    CHECK(back.eta0 == rc.eta0);
    CHECK(back.lambda == rc.lambda);
    CHECK(back.batch == rc.batch);
    CHECK(back.threshold == rc.threshold);
    CHECK(back.metrics == rc.metrics);
    CHECK(back.n_grid == rc.n_grid);
    CHECK(back.sweep_models == rc.sweep_models);
    CHECK(back.prony_orders == rc.prony_orders);

    // serializing the parse is a fixpoint
    CHECK(back.serialize() == text);
}

TEST_CASE("values parse exactly and comments are ignored") {
    cfg::RunConfig rc = cfg::parse_config(
        "# leading comment\n"
        "[run]\n"
        "seed = 42\n"
        "model = lasso\n"
        "\n"
        "[optim]\n"
        "eta0 = 2.5e-3\n"
        "penalty = l1\n"
        "mode = gd\n"
        "[bench]\n"
        "n_grid = 16, 32\n"
        "reps = 5\n",
        "inline");
    CHECK(rc.seed == 42);
    CHECK(rc.model == cfg::ModelKind::Lasso);
    CHECK(rc.eta0 == 2.5e-3);
    CHECK(rc.penalty == "l1");
    CHECK(rc.mode == rgsm::OptimMode::Gd);
    CHECK(rc.n_grid == std::vector<std::size_t>{16, 32});
    CHECK(rc.reps == 5);
    // untouched sections keep defaults
    CHECK(rc.epochs == 80);
    CHECK(rc.lambda == 0.01);
}

TEST_CASE("malformed input is rejected with the origin in the message") {
    auto parse = [](const std::string& text) {
        return [text] { (void)cfg::parse_config(text, "bad.cfg"); };
    };

    CHECK(msg_of(parse("seed = 1\n")).find("before any [section]") != std::string::npos);
    CHECK(msg_of(parse("[nope]\nx = 1\n")).find("unknown config section") != std::string::npos);
    CHECK(msg_of(parse("[run]\nbogus = 1\n")).find("unknown config key") != std::string::npos);
    CHECK(msg_of(parse("[run]\nbogus = 1\n")).find("bad.cfg:2") != std::string::npos);
    CHECK(msg_of(parse("[run]\nseed\n")).find("expected key = value") != std::string::npos);
    CHECK(msg_of(parse("[run]\nseed = -3\n")).find("seed") != std::string::npos);
    CHECK(msg_of(parse("[run]\nseed = twelve\n")).find("seed") != std::string::npos);
    CHECK(msg_of(parse("[optim]\neta0 = 1e\n")).find("eta0") != std::string::npos);
    CHECK(msg_of(parse("[model]\nbias = yes\n")).find("bias") != std::string::npos);
    CHECK(msg_of(parse("[run]\nseed = 1\nseed = 2\n")).find("duplicate") != std::string::npos);
    CHECK(msg_of(parse("[run]\nmodel = resnet\n")).find("model") != std::string::npos);
}

TEST_CASE("validation rejects out-of-range settings") {
    auto bad = [](auto&& mutate) {
        cfg::RunConfig rc;
        mutate(rc);
        return msg_of([&] { rc.validate(); });
    };

    CHECK(bad([](cfg::RunConfig& r) { r.ratio.train = 0.9; })
              .find("train_ratio + val_ratio + test_ratio") != std::string::npos);
    CHECK(bad([](cfg::RunConfig& r) { r.events = 2; }).find("events") != std::string::npos);
    CHECK(bad([](cfg::RunConfig& r) { r.penalty = "ridge"; }).find("penalty") != std::string::npos);
    CHECK(bad([](cfg::RunConfig& r) { r.decay = 1.5; }).find("decay") != std::string::npos);
    CHECK(bad([](cfg::RunConfig& r) { r.metrics = {"rmse"}; }).find("metrics") != std::string::npos);
    CHECK(bad([](cfg::RunConfig& r) { r.pruning = 1.0; }).find("pruning") != std::string::npos);
    CHECK(bad([](cfg::RunConfig& r) { r.sweep_models = {"vae"}; })
              .find("models") != std::string::npos);
    CHECK(bad([](cfg::RunConfig& r) { r.spec.modes.clear(); })
              .find("mode") != std::string::npos);
    // a cnn run cannot carry a group or l1 penalty
    CHECK(bad([](cfg::RunConfig& r) {
              r.model = cfg::ModelKind::Cnn;
              r.penalty = "group";
          }).find("cnn") != std::string::npos);
}

TEST_CASE("penalty resolution follows the model kind") {
    cfg::RunConfig rc;

    rc.penalty = "auto";
    CHECK(rc.penalty_spec(cfg::ModelKind::Glasso).kind == rgsm::PenaltyKind::GroupLasso);
    CHECK(rc.penalty_spec(cfg::ModelKind::Lasso).kind == rgsm::PenaltyKind::Lasso);
    CHECK(rc.penalty_spec(cfg::ModelKind::Dense).kind == rgsm::PenaltyKind::None);
    CHECK(rc.penalty_spec(cfg::ModelKind::Cnn).kind == rgsm::PenaltyKind::None);
    CHECK(rc.penalty_spec(cfg::ModelKind::Glasso).lambda == rc.lambda);

    rc.penalty = "none";
    CHECK(rc.penalty_spec(cfg::ModelKind::Glasso).kind == rgsm::PenaltyKind::None);

    rc.penalty = "group";
    CHECK(rc.penalty_spec(cfg::ModelKind::Dense).kind == rgsm::PenaltyKind::GroupLasso);
    CHECK_THROWS_AS(rc.penalty_spec(cfg::ModelKind::Cnn), ConfigError);
}

TEST_CASE("kind names round trip") {
    for (auto k : {cfg::ModelKind::Glasso, cfg::ModelKind::Lasso, cfg::ModelKind::Dense,
                   cfg::ModelKind::Cnn})
        CHECK(cfg::kind_from_name(cfg::kind_name(k)) == k);
    CHECK_THROWS_AS(cfg::kind_from_name("transformer"), ConfigError);
}

TEST_CASE("dimension setters feed the model configs") {
    cfg::RunConfig rc;
    rc.d_model = 16;
    rc.heads = 2;
    model::ModelConfig mc = rc.model_config(5, 64, 16);
    CHECK(mc.channels == 5);
    CHECK(mc.seq_len == 64);
    CHECK(mc.t_f == 16);
    CHECK(mc.d_model == 16);
    CHECK(mc.heads == 2);
    mc.validate();

    baseline::CnnConfig cc = rc.cnn_config(5, 64, 16);
    CHECK(cc.width == rc.cnn_width);
    CHECK(cc.depth == rc.cnn_depth);
    cc.validate();
}
