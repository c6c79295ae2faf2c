#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fdl/checkpoint.hpp"
#include "fdl/errors.hpp"
#include "fdl/freqstats.hpp"
#include "fdl/metrics.hpp"
#include "fdl/rng.hpp"
#include "fdl/synth.hpp"
#include "fdl/toynet.hpp"
#include "fdl/trainer.hpp"
#include "oracles.hpp"

using namespace fdl;
namespace fs = std::filesystem;

TEST_CASE("variant parsing") {
    CHECK(parse_variant("baseline").kind == Variant::baseline);
    CHECK(parse_variant("fdl").kind == Variant::fdl);
    CHECK(parse_variant("static_all").kind == Variant::static_all);
    const VariantSpec tk = parse_variant("top_k:16");
    CHECK(tk.kind == Variant::top_k);
    CHECK(tk.k == 16);
    CHECK(tk.str() == "top_k:16");
    CHECK_THROWS_AS(parse_variant("topk"), ConfigError);
    CHECK_THROWS_AS(parse_variant("top_k:"), ConfigError);
    CHECK_THROWS_AS(parse_variant("top_k:abc"), ConfigError);
    CHECK_THROWS_AS(parse_variant("top_k:0"), ConfigError);
}

TEST_CASE("synthetic scenes share geometry across styles") {
    const auto day = synth_dataset(6, 99, SceneStyle::day, 64, 64, 4);
    const auto night = synth_dataset(6, 99, SceneStyle::night, 64, 64, 4);
    REQUIRE(day.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(day[i].labels == night[i].labels);
        for (std::int32_t v : day[i].labels.data) {
            CHECK(v >= 0);
            CHECK(v < 4);
        }
    }
}

TEST_CASE("day scenes never clip and night exposure stays in range") {
    const auto day = synth_dataset(8, 7, SceneStyle::day, 64, 64, 4);
    for (const auto& scene : day) {
        for (double v : scene.image.data) {
            CHECK(v > 0.0);
            CHECK(v < 1.0);
        }
        for (double v : scene.exposure.data) CHECK(v == 1.0);
    }
    const auto night = synth_dataset(8, 7, SceneStyle::night, 64, 64, 4);
    for (const auto& scene : night) {
        for (double v : scene.exposure.data) {
            CHECK(v >= 0.1);
            CHECK(v <= 2.5);
        }
        for (double v : scene.image.data) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("scene generation is bitwise deterministic") {
    const auto a = synth_dataset(4, 1234, SceneStyle::night, 32, 32, 4);
    const auto b = synth_dataset(4, 1234, SceneStyle::night, 32, 32, 4);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].labels == b[i].labels);
        CHECK(a[i].image.data == b[i].image.data);
    }
    const auto c = synth_dataset(4, 1235, SceneStyle::night, 32, 32, 4);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        any_diff = any_diff || a[i].image.data != c[i].image.data;
    }
    CHECK(any_diff);
}

TEST_CASE("forward produces finite logits of the right shape") {
    ToyNetConfig cfg = small_test_config();
    for (const char* variant : {"baseline", "fdl", "top_k:2", "static_all"}) {
        CAPTURE(variant);
        cfg.variant = parse_variant(variant);
        ToyNet net(cfg, 5);
        const auto scenes =
            synth_dataset(1, 5, SceneStyle::night, cfg.input_size, cfg.input_size,
                          cfg.classes);
        Tape tape;
        ToyNet::Forward fwd = net.forward(tape, scenes[0].image);
        const Tensor& logits = tape.value(fwd.logits);
        CHECK(logits.shape == Shape{cfg.classes, cfg.input_size, cfg.input_size});
        CHECK(logits.all_finite());
        CHECK(fwd.lfe_weights.has_value() == (cfg.variant.kind == Variant::fdl));
    }
}

TEST_CASE("shared-seed fdl net with zero alpha reproduces baseline logits bitwise") {
    ToyNetConfig cfg = small_test_config();
    cfg.variant = parse_variant("baseline");
    ToyNet baseline(cfg, 21);
    cfg.variant = parse_variant("fdl");
    ToyNet fdl_net(cfg, 21);
    CHECK(fdl_net.param("sff.alpha").value.data[0] == 0.0);

    const auto scenes = synth_dataset(2, 17, SceneStyle::night, cfg.input_size,
                                      cfg.input_size, cfg.classes);
    for (const auto& scene : scenes) {
        Tape ta, tb;
        const Tensor& lb = ta.value(baseline.forward(ta, scene.image).logits);
        const Tensor& lf = tb.value(fdl_net.forward(tb, scene.image).logits);
        REQUIRE(lb.size() == lf.size());
        for (std::size_t i = 0; i < lb.size(); ++i) CHECK(lb.data[i] == lf.data[i]);
    }
}

TEST_CASE("zero head weights give uniform class probabilities") {
    ToyNetConfig cfg = small_test_config();
    ToyNet net(cfg, 3);
    Param& hw = net.param("head.weight");
    for (double& v : hw.value.data) v = 0.0;
    const auto scenes = synth_dataset(1, 31, SceneStyle::day, cfg.input_size,
                                      cfg.input_size, cfg.classes);
    Tape tape;
    ToyNet::Forward fwd = net.forward(tape, scenes[0].image);
    ValueId probs = tape.softmax(fwd.logits, 0);
    for (double v : tape.value(probs).data) {
        CHECK(v == doctest::Approx(1.0 / cfg.classes).epsilon(1e-12));
    }
}

TEST_CASE("full network gradient fidelity on a 2-image batch") {
    ToyNetConfig cfg = small_test_config();
    ToyNet net(cfg, 1);
    net.param("sff.alpha").value.data[0] = 0.3;
    for (const auto& [name, p] : net.named_params()) {
        if (name.ends_with("bias")) {
            for (double& v : p->value.data) v = 0.05;
        }
    }
    const auto scenes = synth_dataset(2, Rng::mix(1, 0x5CE), SceneStyle::night,
                                      cfg.input_size, cfg.input_size, cfg.classes);
    LossConfig loss_cfg;
    GradCheckDetail d = grad_check_detailed(
        [&](Tape& t) {
            ValueId l0 = seg_losses(t, net.forward(t, scenes[0].image).logits,
                                    scenes[0].labels, loss_cfg)
                             .total;
            ValueId l1 = seg_losses(t, net.forward(t, scenes[1].image).logits,
                                    scenes[1].labels, loss_cfg)
                             .total;
            return t.scale(t.add(l0, l1), 0.5);
        },
        net.params());
    CHECK(d.max_rel < 1e-5);
    CHECK(d.max_abs_small < 1e-7);
}

TEST_CASE("toynet config validation") {
    ToyNetConfig cfg = small_test_config();
    cfg.backbone_widths = {4, 8};
    CHECK_THROWS_AS(ToyNet(cfg, 1), ConfigError);
    cfg = small_test_config();
    cfg.backbone_widths = {4, 8, 10};  // 10 channels not divisible by n = 4
    CHECK_THROWS_AS(ToyNet(cfg, 1), ConfigError);
    cfg = small_test_config();
    cfg.input_size = 20;  // not a multiple of 8
    CHECK_THROWS_AS(ToyNet(cfg, 1), ConfigError);
}

TEST_CASE("poly schedule endpoints and monotonicity") {
    CHECK(poly_lr(5e-3, 0, 100, 0.9) == 5e-3);
    CHECK(poly_lr(5e-3, 100, 100, 0.9) == 0.0);
    double prev = poly_lr(5e-3, 0, 100, 0.9);
    for (std::size_t it = 1; it <= 100; ++it) {
        const double lr = poly_lr(5e-3, it, 100, 0.9);
        CHECK(lr < prev);
        CHECK(lr >= 0.0);
        prev = lr;
    }
}

TEST_CASE("training runs, logs, and is bitwise reproducible") {
    ToyNetConfig cfg = small_test_config();
    const auto data = synth_dataset(8, 42, SceneStyle::night, cfg.input_size,
                                    cfg.input_size, cfg.classes);
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 4;
    tc.seed = 9;

    ToyNet net1(cfg, 9);
    TrainResult r1 = train(net1, data, tc);
    ToyNet net2(cfg, 9);
    TrainResult r2 = train(net2, data, tc);

    REQUIRE_FALSE(r1.diverged);
    CHECK(train_log_csv(r1.log) == train_log_csv(r2.log));

    // log shape: one row per iteration plus the schedule endpoint
    REQUIRE(r1.log.size() == 2 * 2 + 1);
    CHECK(r1.log.front().lr == 5e-3);
    CHECK(r1.log.front().iter == 0);
    CHECK(r1.log.back().lr == 0.0);
    CHECK(r1.log.back().iter == 4);
    CHECK(r1.log[r1.log.size() - 2].lr > 0.0);
    for (const auto& row : r1.log) {
        CHECK(std::isfinite(row.loss_total));
        CHECK(row.loss_total >= 0.0);
    }

    // params moved and identically across the two runs
    bool moved = false;
    const auto& n1 = net1.named_params();
    const auto& n2 = net2.named_params();
    for (std::size_t i = 0; i < n1.size(); ++i) {
        CHECK(n1[i].second->value.data == n2[i].second->value.data);
        ToyNet fresh(cfg, 9);
        moved = moved ||
                n1[i].second->value.data != fresh.param(n1[i].first).value.data;
    }
    CHECK(moved);
}

TEST_CASE("threaded training matches single-threaded bitwise") {
    ToyNetConfig cfg = small_test_config();
    const auto data = synth_dataset(6, 77, SceneStyle::night, cfg.input_size,
                                    cfg.input_size, cfg.classes);
    TrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = 3;
    tc.seed = 5;

    ToyNet net1(cfg, 5);
    tc.threads = 1;
    TrainResult r1 = train(net1, data, tc);
    ToyNet net4(cfg, 5);
    tc.threads = 4;
    TrainResult r4 = train(net4, data, tc);
    CHECK(train_log_csv(r1.log) == train_log_csv(r4.log));
    const auto& n1 = net1.named_params();
    const auto& n4 = net4.named_params();
    for (std::size_t i = 0; i < n1.size(); ++i) {
        CHECK(n1[i].second->value.data == n4[i].second->value.data);
    }
}

TEST_CASE("training divergence aborts with the log intact") {
    ToyNetConfig cfg = small_test_config();
    const auto data = synth_dataset(4, 3, SceneStyle::night, cfg.input_size,
                                    cfg.input_size, cfg.classes);
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 4;
    tc.base_lr = 1e120;  // guaranteed overflow
    ToyNet net(cfg, 3);
    TrainResult r = train(net, data, tc);
    CHECK(r.diverged);
    CHECK(r.completed_epochs < 3);
    REQUIRE_FALSE(r.log.empty());
}

TEST_CASE("miou forced cases") {
    LabelMap a(2, 2, 0);
    a.at(0, 1) = 1;
    a.at(1, 1) = 1;
    CHECK(evaluate_miou({a}, {a}, 2).miou == doctest::Approx(1.0));

    // pred [[0,1],[1,1]] vs gt [[0,1],[0,1]]
    LabelMap pred(2, 2, 0);
    pred.at(0, 1) = 1;
    pred.at(1, 0) = 1;
    pred.at(1, 1) = 1;
    LabelMap gt(2, 2, 0);
    gt.at(0, 1) = 1;
    gt.at(1, 1) = 1;
    IouReport rep = evaluate_miou({pred}, {gt}, 2);
    CHECK(rep.per_class[0] == doctest::Approx(0.5));
    CHECK(rep.per_class[1] == doctest::Approx(2.0 / 3.0));
    CHECK(rep.miou == doctest::Approx(7.0 / 12.0));

    LabelMap zeros(2, 2, 0), ones(2, 2, 1);
    CHECK(evaluate_miou({zeros}, {ones}, 2).miou == 0.0);
}

TEST_CASE("miou excludes classes absent from both sides") {
    LabelMap pred(2, 2, 0), gt(2, 2, 0);
    pred.at(0, 0) = 1;
    gt.at(0, 0) = 1;
    IouReport rep = evaluate_miou({pred}, {gt}, 4);
    CHECK(rep.present[0]);
    CHECK(rep.present[1]);
    CHECK_FALSE(rep.present[2]);
    CHECK_FALSE(rep.present[3]);
    CHECK(rep.miou == doctest::Approx(1.0));
}

TEST_CASE("miou is invariant under consistent class relabeling") {
    Rng rng(601);
    std::vector<LabelMap> preds, gts;
    for (int i = 0; i < 3; ++i) {
        LabelMap p(8, 8, 0), g(8, 8, 0);
        for (auto& v : p.data) v = static_cast<std::int32_t>(rng.below(3));
        for (auto& v : g.data) v = static_cast<std::int32_t>(rng.below(3));
        preds.push_back(p);
        gts.push_back(g);
    }
    const double base = evaluate_miou(preds, gts, 3).miou;
    CHECK(base == doctest::Approx(oracle::miou(preds, gts, 3)).epsilon(1e-12));

    // permute classes 0->1->2->0 in both
    auto permute = [](std::vector<LabelMap> maps) {
        for (auto& m : maps)
            for (auto& v : m.data) v = (v + 1) % 3;
        return maps;
    };
    const double perm = evaluate_miou(permute(preds), permute(gts), 3).miou;
    CHECK(perm == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("miou validates shapes and labels") {
    CHECK_THROWS_AS(evaluate_miou({LabelMap(2, 2)}, {LabelMap(2, 3)}, 2), DimensionError);
    CHECK_THROWS_AS(evaluate_miou({LabelMap(2, 2)}, {LabelMap(2, 2), LabelMap(2, 2)}, 2),
                    DimensionError);
    LabelMap bad(2, 2, 7);
    CHECK_THROWS_AS(evaluate_miou({bad}, {LabelMap(2, 2)}, 2), ConfigError);
}

TEST_CASE("argmax labels break ties toward the lower class") {
    Tensor logits({3, 1, 2}, 0.0);
    logits.at(1, 0, 1) = 2.0;
    LabelMap lab = argmax_labels(logits);
    CHECK(lab.at(0, 0) == 0);
    CHECK(lab.at(0, 1) == 1);
}

TEST_CASE("checkpoint round trip preserves parameters bitwise") {
    const fs::path dir = fs::temp_directory_path() / "fdl_ckpt_test";
    fs::remove_all(dir);
    ToyNetConfig cfg = small_test_config();
    cfg.variant = parse_variant("top_k:3");
    ToyNet net(cfg, 77);
    net.param("head.bias").value.data[0] = 0.125;
    save_checkpoint(dir, net);

    ToyNet back = load_checkpoint(dir);
    CHECK(back.config().variant.str() == "top_k:3");
    CHECK(back.config().input_size == cfg.input_size);
    const auto& a = net.named_params();
    const auto& b = back.named_params();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].first == b[i].first);
        CHECK(a[i].second->value.data == b[i].second->value.data);
    }

    // same forward outputs after reload
    const auto scenes = synth_dataset(1, 5, SceneStyle::night, cfg.input_size,
                                      cfg.input_size, cfg.classes);
    Tape t1, t2;
    const Tensor& l1 = t1.value(net.forward(t1, scenes[0].image).logits);
    const Tensor& l2 = t2.value(back.forward(t2, scenes[0].image).logits);
    CHECK(l1.data == l2.data);

    // manifest lists every parameter with shape and role
    std::ifstream manifest(dir / "manifest.txt");
    std::string line;
    std::size_t rows = 0;
    while (std::getline(manifest, line)) ++rows;
    CHECK(rows == a.size());
    fs::remove_all(dir);
}

TEST_CASE("training job writes artifacts and a degenerate ablation row matches eval") {
    const fs::path dir = fs::temp_directory_path() / "fdl_job_test";
    fs::remove_all(dir);

    TrainJob job;
    job.variant = parse_variant("fdl");
    job.seed = 11;
    job.net = small_test_config();
    job.train_count = 4;
    job.val_count = 2;
    job.train.epochs = 2;
    job.train.batch_size = 4;
    job.out_dir = dir;
    TrainJobResult res = run_training_job(job);
    CHECK_FALSE(res.diverged);
    CHECK(fs::exists(res.log_path));
    CHECK(fs::exists(res.checkpoint_dir / "config.txt"));
    CHECK(fs::exists(dir / "eval_result.csv"));
    CHECK(fs::exists(dir / "lfe_weights.csv"));

    // single variant, single seed ablation: one row, same pipeline
    AblationSpec spec;
    spec.variants = {parse_variant("fdl")};
    spec.seeds = {11};
    spec.net = job.net;
    spec.train = job.train;
    spec.train_count = 4;
    spec.val_count = 2;
    spec.out_dir = dir / "ablation";
    const auto rows = ablation_run(spec);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].variant == "fdl");
    CHECK(rows[0].seed == 11);
    CHECK(rows[0].miou == doctest::Approx(res.miou).epsilon(1e-15));

    const std::string csv = ablation_csv(rows);
    CHECK(csv.find("variant,seed,miou\n") == 0);
    fs::remove_all(dir);
}

TEST_CASE("data spec parsing") {
    DataSpec spec = parse_data_spec("night:40:7");
    CHECK(spec.style == SceneStyle::night);
    CHECK(spec.count == 40);
    CHECK(spec.seed == 7);
    CHECK_THROWS_AS(parse_data_spec("night:40"), ConfigError);
    CHECK_THROWS_AS(parse_data_spec("dusk:40:7"), ConfigError);
    CHECK_THROWS_AS(parse_data_spec("night:0:7"), ConfigError);
    CHECK_THROWS_AS(parse_data_spec("night:x:7"), ConfigError);
}

TEST_CASE("night corpus shows larger dataset variance than day in most regions") {
    // reduced-size mirror of the frequency-statistics acceptance run
    const RegionPartition part = partition_spectrum(8);
    std::vector<ImageFreqSummary> day_s, night_s;
    const auto day = synth_dataset(40, 2024, SceneStyle::day, 64, 64, 4);
    const auto night = synth_dataset(40, 2024, SceneStyle::night, 64, 64, 4);
    for (std::size_t i = 0; i < day.size(); ++i) {
        day_s.push_back(image_freq_summary(luma(day[i].image), part));
        night_s.push_back(image_freq_summary(luma(night[i].image), part));
    }
    const DatasetFreqSummary ds = dataset_summary(day_s);
    const DatasetFreqSummary ns = dataset_summary(night_s);
    int larger = 0;
    for (std::size_t r = 0; r < 4; ++r) larger += ns.variance[r] > ds.variance[r];
    CHECK(larger >= 3);
}
