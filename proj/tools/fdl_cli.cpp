// fdl: frequency-domain learning toolkit for night-style scene segmentation.
//
// Subcommands: freqstats, selftest, synth, train, eval, ablate.
// Exit codes: 0 ok, 1 selftest failure, 2 IO/format, 3 empty or insufficient
// input, 4 usage, 5 numeric divergence.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fdl/checkpoint.hpp"
#include "fdl/dct.hpp"
#include "fdl/errors.hpp"
#include "fdl/freqstats.hpp"
#include "fdl/io_util.hpp"
#include "fdl/netpbm.hpp"
#include "fdl/nn.hpp"
#include "fdl/parallel.hpp"
#include "fdl/rng.hpp"
#include "fdl/synth.hpp"
#include "fdl/tape.hpp"
#include "fdl/tensor.hpp"
#include "fdl/toynet.hpp"
#include "fdl/trainer.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitSelftestFail = 1;
constexpr int kExitIo = 2;
constexpr int kExitEmptyInput = 3;
constexpr int kExitUsage = 4;
constexpr int kExitNumeric = 5;

std::size_t resolve_threads(std::size_t flag_value, bool flag_given) {
    if (!flag_given) {
        if (const char* env = std::getenv("FDL_THREADS")) {
            const std::string s(env);
            if (!s.empty() && s.find_first_not_of("0123456789") == std::string::npos) {
                const std::size_t v = std::stoull(s);
                if (v >= 1) return v;
            }
        }
    }
    return std::max<std::size_t>(flag_value, 1);
}

// "1..5" or "1,4,9"
std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
    std::vector<std::uint64_t> seeds;
    const auto dots = s.find("..");
    if (dots != std::string::npos) {
        const std::string lo = s.substr(0, dots), hi = s.substr(dots + 2);
        if (lo.empty() || hi.empty() ||
            lo.find_first_not_of("0123456789") != std::string::npos ||
            hi.find_first_not_of("0123456789") != std::string::npos) {
            throw fdl::ConfigError("seed range '" + s + "' must be <lo>..<hi>");
        }
        const std::uint64_t a = std::stoull(lo), b = std::stoull(hi);
        if (b < a) throw fdl::ConfigError("seed range '" + s + "' is reversed");
        for (std::uint64_t v = a; v <= b; ++v) seeds.push_back(v);
        return seeds;
    }
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos) {
            throw fdl::ConfigError("bad seed '" + item + "' in list '" + s + "'");
        }
        seeds.push_back(std::stoull(item));
    }
    if (seeds.empty()) throw fdl::ConfigError("empty seed list '" + s + "'");
    return seeds;
}

// ---------------------------------------------------------------------------
// freqstats
// ---------------------------------------------------------------------------

struct FreqstatsArgs {
    std::string mode;  // image | dataset
    std::string input;
    std::string out = "freqstats.csv";
    std::string per_image;  // dataset mode; defaults beside out
    std::size_t threads = 1;
    bool threads_given = false;
};

int cmd_freqstats(const FreqstatsArgs& args) {
    const fdl::RegionPartition partition = fdl::partition_spectrum(8);
    if (args.mode == "image") {
        fdl::Tensor img;
        try {
            img = fdl::load_image_gray(args.input);
        } catch (const fdl::IoError& e) {
            std::cerr << "fdl freqstats: " << args.input << ": " << e.what() << "\n";
            return kExitIo;
        }
        const fdl::ImageFreqSummary summary = fdl::image_freq_summary(img, partition);
        std::vector<std::pair<std::string, fdl::ImageFreqSummary>> rows{
            {fs::path(args.input).filename().string(), summary}};
        fdl::write_per_image_csv(args.out, rows);
        std::cout << fdl::per_image_csv(rows);
        return kExitOk;
    }

    // dataset mode: scan *.pgm / *.ppm non-recursively, lexicographic order
    std::vector<fs::path> files;
    try {
        for (const auto& entry : fs::directory_iterator(args.input)) {
            if (!entry.is_regular_file()) continue;
            const std::string ext = entry.path().extension().string();
            if (ext == ".pgm" || ext == ".ppm") files.push_back(entry.path());
        }
    } catch (const fs::filesystem_error& e) {
        std::cerr << "fdl freqstats: " << args.input << ": " << e.what() << "\n";
        return kExitIo;
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
    if (files.empty()) {
        std::cerr << "fdl freqstats: no .pgm/.ppm files in " << args.input << "\n";
        return kExitEmptyInput;
    }

    const std::size_t threads = resolve_threads(args.threads, args.threads_given);
    std::vector<fdl::ImageFreqSummary> summaries(files.size());
    std::vector<std::string> failures(files.size());
    fdl::parallel_for(files.size(), threads, [&](std::size_t i) {
        try {
            summaries[i] = fdl::image_freq_summary(fdl::load_image_gray(files[i]), partition);
        } catch (const std::exception& e) {
            failures[i] = e.what();
        }
    });
    for (std::size_t i = 0; i < files.size(); ++i) {
        if (!failures[i].empty()) {
            std::cerr << "fdl freqstats: " << files[i].string() << ": " << failures[i] << "\n";
            return kExitIo;
        }
    }

    std::vector<std::pair<std::string, fdl::ImageFreqSummary>> rows;
    rows.reserve(files.size());
    for (std::size_t i = 0; i < files.size(); ++i) {
        rows.emplace_back(files[i].filename().string(), summaries[i]);
    }
    const fdl::DatasetFreqSummary summary = fdl::dataset_summary(summaries);

    const fs::path per_image_path =
        args.per_image.empty() ? fs::path(args.out).concat(".images.csv") : fs::path(args.per_image);
    fdl::write_per_image_csv(per_image_path, rows);
    fdl::write_dataset_csv(args.out, summary);
    std::cout << fdl::dataset_csv(summary);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// selftest
// ---------------------------------------------------------------------------

struct SelftestArgs {
    std::uint64_t seed = 1;
    bool break_dct = false;
    std::string out = "selftest_results.csv";
};

struct CheckResult {
    std::string name;
    double max_error = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

int cmd_selftest(const SelftestArgs& args) {
    std::vector<CheckResult> checks;
    auto record = [&](const std::string& name, double err, double tol) {
        checks.push_back({name, err, tol, err < tol});
    };

    // exact-identity checks, tolerance 1e-9
    {
        double worst = 0.0;
        for (std::size_t n : {2ul, 4ul, 8ul, 16ul, 32ul}) {
            fdl::DctBasis basis = fdl::make_basis(n);
            if (args.break_dct && n == 8) basis.basis1d.at(1, 1) *= 1.001;  // fault hook
            const fdl::Tensor prod =
                fdl::matmul(basis.basis1d, fdl::transpose2d(basis.basis1d));
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    const double want = i == j ? 1.0 : 0.0;
                    worst = std::max(worst, std::abs(prod.at(i, j) - want));
                }
            }
        }
        record("dct_orthonormality", worst, 1e-9);
    }
    {
        fdl::Rng rng(fdl::Rng::mix(args.seed, 0xD07));
        const fdl::DctBasis basis = fdl::make_basis(8);
        double worst_rt = 0.0, worst_pv = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            fdl::Tensor block({8, 8});
            for (double& v : block.data) v = rng.uniform(-1.0, 1.0);
            const fdl::Tensor spec = fdl::dct2(block, basis);
            const fdl::Tensor back = fdl::idct2(spec, basis);
            double e_in = 0.0, e_sp = 0.0;
            for (std::size_t i = 0; i < block.size(); ++i) {
                worst_rt = std::max(worst_rt, std::abs(back.data[i] - block.data[i]));
                e_in += block.data[i] * block.data[i];
                e_sp += spec.data[i] * spec.data[i];
            }
            worst_pv = std::max(worst_pv, std::abs(e_in - e_sp) / std::max(1.0, e_in));
        }
        record("dct_roundtrip", worst_rt, 1e-9);
        record("dct_parseval", worst_pv, 1e-9);
    }

    // gradient checks: entries with measurable gradients at relative 1e-5,
    // near-zero-gradient entries at absolute 1e-7 (the oracle itself has
    // ~1e-10 of central-difference rounding there)
    auto record_grad = [&](const std::string& name, const fdl::GradCheckDetail& d) {
        record(name + "_rel", d.max_rel, 1e-5);
        record(name + "_small", d.max_abs_small, 1e-7);
    };
    {
        fdl::Rng rng(fdl::Rng::mix(args.seed, 0x17FE));
        fdl::LfeParams lfe(8, 4);
        for (double& v : lfe.lfcc_weight.value.data) v = rng.normal() * 0.5;
        fdl::Param v_freq(fdl::Tensor({32}));
        for (double& v : v_freq.value.data) v = rng.normal();
        record_grad("grad_lfe",
                    fdl::grad_check_detailed(
                        [&](fdl::Tape& t) {
                            fdl::LfeNodes nodes = fdl::lfe_forward(t, t.param(v_freq), lfe);
                            return t.sum(t.square(nodes.v_prime));
                        },
                        {&lfe.lfcc_weight, &lfe.gamma, &lfe.beta, &v_freq}));
    }
    {
        fdl::Rng rng(fdl::Rng::mix(args.seed, 0x5FF));
        fdl::SffParams sff(5, 6, 8);
        for (double& v : sff.proj_s.value.data) v = rng.normal() * 0.4;
        for (double& v : sff.proj_f.value.data) v = rng.normal() * 0.4;
        sff.alpha.value.data[0] = 0.3;
        fdl::Param ctx(fdl::Tensor({6, 3, 3}));
        for (double& v : ctx.value.data) v = rng.normal();
        fdl::Param vfp(fdl::Tensor({8}));
        for (double& v : vfp.value.data) v = rng.normal();
        record_grad("grad_sff",
                    fdl::grad_check_detailed(
                        [&](fdl::Tape& t) {
                            fdl::SffNodes nodes =
                                fdl::sff_forward(t, t.param(ctx), t.param(vfp), sff);
                            return t.sum(t.square(nodes.fused));
                        },
                        {&sff.proj_s, &sff.proj_f, &sff.alpha, &ctx, &vfp}));
    }
    {
        fdl::Rng rng(fdl::Rng::mix(args.seed, 0x1055));
        fdl::Param logits(fdl::Tensor({4, 6, 6}));
        for (double& v : logits.value.data) v = rng.normal();
        fdl::LabelMap labels(6, 6);
        for (auto& v : labels.data) v = static_cast<std::int32_t>(rng.below(4));
        fdl::LossConfig cfg;
        record_grad("grad_losses",
                    fdl::grad_check_detailed(
                        [&](fdl::Tape& t) {
                            return fdl::seg_losses(t, t.param(logits), labels, cfg).total;
                        },
                        {&logits}));
    }
    {
        const fdl::ToyNetConfig cfg = fdl::small_test_config();
        fdl::ToyNet net(cfg, args.seed);
        // positive biases and a live fusion branch keep the check state away
        // from exact ReLU kinks and exercise every parameter
        net.param("sff.alpha").value.data[0] = 0.3;
        for (const auto& [name, p] : net.named_params()) {
            if (name.ends_with("bias")) {
                for (double& v : p->value.data) v = 0.05;
            }
        }
        const auto scenes = fdl::synth_dataset(2, fdl::Rng::mix(args.seed, 0x5CE),
                                               fdl::SceneStyle::night, cfg.input_size,
                                               cfg.input_size, cfg.classes);
        fdl::LossConfig loss_cfg;
        record_grad("grad_toynet",
                    fdl::grad_check_detailed(
                        [&](fdl::Tape& t) {
                            fdl::ValueId l0 =
                                fdl::seg_losses(t, net.forward(t, scenes[0].image).logits,
                                                scenes[0].labels, loss_cfg)
                                    .total;
                            fdl::ValueId l1 =
                                fdl::seg_losses(t, net.forward(t, scenes[1].image).logits,
                                                scenes[1].labels, loss_cfg)
                                    .total;
                            return t.scale(t.add(l0, l1), 0.5);
                        },
                        net.params()));
    }

    std::ostringstream csv;
    csv << "check,max_error,tolerance,status\n";
    std::vector<std::string> failures;
    for (const CheckResult& c : checks) {
        std::cout << (c.pass ? "PASS " : "FAIL ") << c.name
                  << " max_error=" << fdl::fmt_double(c.max_error)
                  << " (tol " << fdl::fmt_double(c.tolerance) << ")\n";
        csv << c.name << "," << fdl::fmt_double(c.max_error) << ","
            << fdl::fmt_double(c.tolerance) << "," << (c.pass ? "pass" : "fail") << "\n";
        if (!c.pass) failures.push_back(c.name);
    }
    fdl::atomic_write_bytes(args.out, csv.str());
    if (!failures.empty()) {
        std::cerr << "selftest failures:";
        for (const std::string& f : failures) std::cerr << " " << f;
        std::cerr << "\n";
        return kExitSelftestFail;
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string style = "night";
    std::size_t count = 200;
    std::uint64_t seed = 1;
    std::size_t size = 64;
    std::size_t classes = 4;
    std::string out;
};

int cmd_synth(const SynthArgs& args) {
    const auto scenes = fdl::synth_dataset(args.count, args.seed, fdl::parse_style(args.style),
                                           args.size, args.size, args.classes);
    fs::create_directories(args.out);
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "scene_%05zu.ppm", i);
        fdl::write_ppm(fs::path(args.out) / name, scenes[i].image);
    }
    std::cout << "wrote " << scenes.size() << " scenes to " << args.out << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// train / eval / ablate
// ---------------------------------------------------------------------------

struct TrainingFlags {
    std::string style = "night";
    std::size_t train_count = 120;
    std::size_t val_count = 40;
    std::size_t epochs = 40;
    std::size_t batch = 8;
    std::size_t size = 64;
    std::size_t classes = 4;
    double lr = 5e-3;
    double weight_decay = 5e-4;
    double momentum = 0.9;
    double lambda1 = 1.0;
    double lambda2 = 0.01;
    bool ohem = false;
    double keep_fraction = 0.25;
    std::size_t edge_radius = 1;
    std::size_t threads = 1;
    bool threads_given = false;
};

void add_training_flags(CLI::App* cmd, TrainingFlags& f) {
    cmd->add_option("--style", f.style, "scene style: day|night");
    cmd->add_option("--train-count", f.train_count, "training scenes");
    cmd->add_option("--val-count", f.val_count, "validation scenes (0: evaluate on train)");
    cmd->add_option("--epochs", f.epochs, "training epochs");
    cmd->add_option("--batch", f.batch, "batch size");
    cmd->add_option("--size", f.size, "scene side length");
    cmd->add_option("--classes", f.classes, "class count");
    cmd->add_option("--lr", f.lr, "base learning rate");
    cmd->add_option("--weight-decay", f.weight_decay, "weight decay");
    cmd->add_option("--momentum", f.momentum, "SGD momentum");
    cmd->add_option("--lambda1", f.lambda1, "segmentation loss weight");
    cmd->add_option("--lambda2", f.lambda2, "edge loss weight");
    cmd->add_flag("--ohem", f.ohem, "keep only the hardest pixels in the segmentation loss");
    cmd->add_option("--keep-fraction", f.keep_fraction, "OHEM keep fraction");
    cmd->add_option("--edge-radius", f.edge_radius, "edge mask radius in pixels");
    cmd->add_option("--threads", f.threads, "worker threads")->each([&f](const std::string&) {
        f.threads_given = true;
    });
}

fdl::TrainJob make_job(const TrainingFlags& f) {
    fdl::TrainJob job;
    job.style = fdl::parse_style(f.style);
    job.train_count = f.train_count;
    job.val_count = f.val_count;
    job.net.input_size = f.size;
    job.net.classes = f.classes;
    job.train.base_lr = f.lr;
    job.train.weight_decay = f.weight_decay;
    job.train.momentum = f.momentum;
    job.train.epochs = f.epochs;
    job.train.batch_size = f.batch;
    job.train.threads = resolve_threads(f.threads, f.threads_given);
    job.train.loss.lambda1 = f.lambda1;
    job.train.loss.lambda2 = f.lambda2;
    job.train.loss.ohem_enabled = f.ohem;
    job.train.loss.ohem_keep_fraction = f.keep_fraction;
    job.train.loss.edge_radius = f.edge_radius;
    return job;
}

int cmd_train(const TrainingFlags& flags, const std::string& variant, std::uint64_t seed,
              const std::string& out, std::optional<std::uint64_t> data_seed) {
    fdl::TrainJob job = make_job(flags);
    job.variant = fdl::parse_variant(variant);
    job.seed = seed;
    job.data_seed = data_seed;
    job.out_dir = out;
    const fdl::TrainJobResult res = fdl::run_training_job(job, &std::cerr);
    if (res.diverged) {
        std::cerr << "training diverged; last good checkpoint: "
                  << (res.completed_epochs > 0 ? res.checkpoint_dir.string() : "none") << "\n";
        return kExitNumeric;
    }
    std::cout << "miou=" << fdl::fmt_double(res.miou) << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& out,
             std::size_t threads, bool threads_given) {
    fdl::ToyNet net = fdl::load_checkpoint(ckpt);
    const fdl::DataSpec spec = fdl::parse_data_spec(data);
    const auto scenes =
        fdl::synth_dataset(spec.count, spec.seed, spec.style, net.config().input_size,
                           net.config().input_size, net.config().classes);
    const fdl::IouReport report =
        fdl::evaluate_net(net, scenes, resolve_threads(threads, threads_given));

    std::ostringstream os;
    os << "metric,value\n";
    os << "miou," << fdl::fmt_double(report.miou) << "\n";
    for (std::size_t c = 0; c < report.per_class.size(); ++c) {
        if (report.present[c]) {
            os << "iou_class_" << c << "," << fdl::fmt_double(report.per_class[c]) << "\n";
        }
    }
    fdl::atomic_write_bytes(out, os.str());
    for (std::size_t c = 0; c < report.per_class.size(); ++c) {
        if (report.present[c]) {
            std::cerr << "iou_class_" << c << "=" << fdl::fmt_double(report.per_class[c])
                      << "\n";
        }
    }
    std::cout << "miou=" << fdl::fmt_double(report.miou) << "\n";
    return kExitOk;
}

int cmd_ablate(const TrainingFlags& flags, const std::string& variants,
               const std::string& seeds, const std::string& out) {
    fdl::AblationSpec spec;
    std::stringstream ss(variants);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) spec.variants.push_back(fdl::parse_variant(item));
    }
    spec.seeds = parse_seed_list(seeds);
    spec.style = fdl::parse_style(flags.style);
    spec.train_count = flags.train_count;
    spec.val_count = flags.val_count;
    spec.net.input_size = flags.size;
    spec.net.classes = flags.classes;
    const fdl::TrainJob proto = make_job(flags);
    spec.train = proto.train;
    spec.out_dir = fs::path(out).parent_path().empty()
                       ? fs::path("ablation_runs")
                       : fs::path(out).parent_path() / "ablation_runs";

    const auto rows = fdl::ablation_run(spec, &std::cerr);
    fdl::write_ablation_csv(out, rows);
    std::cout << fdl::ablation_csv(rows);
    for (const auto& [name, mean, stddev] : fdl::ablation_stats(rows)) {
        std::cout << "# " << name << " mean=" << fdl::fmt_double(mean)
                  << " std=" << fdl::fmt_double(stddev) << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"frequency-domain learning toolkit"};
    app.require_subcommand(1);

    // freqstats
    FreqstatsArgs fs_args;
    CLI::App* freqstats = app.add_subcommand("freqstats", "block-DCT frequency statistics");
    freqstats->require_subcommand(1);
    CLI::App* fs_image = freqstats->add_subcommand("image", "summarize one image");
    fs_image->add_option("path", fs_args.input, "PGM/PPM image")->required();
    fs_image->add_option("--out", fs_args.out, "per-image CSV path");
    CLI::App* fs_dataset = freqstats->add_subcommand("dataset", "summarize a directory");
    fs_dataset->add_option("dir", fs_args.input, "directory of .pgm/.ppm images")->required();
    fs_dataset->add_option("--out", fs_args.out, "dataset summary CSV path")->required();
    fs_dataset->add_option("--per-image", fs_args.per_image,
                           "per-image CSV path (default: <out>.images.csv)");
    fs_dataset->add_option("--threads", fs_args.threads, "worker threads")
        ->each([&fs_args](const std::string&) { fs_args.threads_given = true; });

    // selftest
    SelftestArgs st_args;
    CLI::App* selftest = app.add_subcommand("selftest", "numeric and gradient checks");
    selftest->add_option("--seed", st_args.seed, "seed for randomized checks");
    selftest->add_flag("--break-dct", st_args.break_dct,
                       "fault hook: perturb one DCT basis entry");
    selftest->add_option("--out", st_args.out, "result CSV path");

    // synth
    SynthArgs sy_args;
    CLI::App* synth = app.add_subcommand("synth", "write a synthetic scene corpus");
    synth->add_option("--style", sy_args.style, "day|night");
    synth->add_option("--count", sy_args.count, "scene count");
    synth->add_option("--seed", sy_args.seed, "generator seed");
    synth->add_option("--size", sy_args.size, "scene side length");
    synth->add_option("--classes", sy_args.classes, "class count");
    synth->add_option("--out", sy_args.out, "output directory")->required();

    // train
    TrainingFlags tr_flags;
    std::string tr_variant = "fdl";
    std::uint64_t tr_seed = 1;
    std::string tr_out = "train_out";
    std::optional<std::uint64_t> tr_data_seed;
    std::uint64_t tr_data_seed_raw = 0;
    CLI::App* train_cmd = app.add_subcommand("train", "train the toy network");
    train_cmd->add_option("--variant", tr_variant,
                          "baseline | fdl | top_k:<K> | static_all");
    train_cmd->add_option("--seed", tr_seed, "run seed");
    train_cmd->add_option("--out", tr_out, "output directory");
    CLI::Option* ds_opt =
        train_cmd->add_option("--data-seed", tr_data_seed_raw,
                              "explicit training data seed (default: derived from --seed)");
    add_training_flags(train_cmd, tr_flags);

    // eval
    std::string ev_ckpt, ev_data, ev_out = "eval_result.csv";
    std::size_t ev_threads = 1;
    bool ev_threads_given = false;
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    eval_cmd->add_option("--ckpt", ev_ckpt, "checkpoint directory")->required();
    eval_cmd->add_option("--data", ev_data, "data spec <style>:<count>:<seed>")->required();
    eval_cmd->add_option("--out", ev_out, "result CSV path");
    eval_cmd->add_option("--threads", ev_threads, "worker threads")
        ->each([&ev_threads_given](const std::string&) { ev_threads_given = true; });

    // ablate
    TrainingFlags ab_flags;
    std::string ab_variants = "fdl,baseline";
    std::string ab_seeds = "1..5";
    std::string ab_out = "ablation.csv";
    CLI::App* ablate_cmd = app.add_subcommand("ablate", "compare variants over seeds");
    ablate_cmd->add_option("--variants", ab_variants, "comma-separated variant list");
    ablate_cmd->add_option("--seeds", ab_seeds, "seed list: 1..5 or 1,4,9");
    ablate_cmd->add_option("--out", ab_out, "comparison CSV path");
    add_training_flags(ablate_cmd, ab_flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (fs_image->parsed() || fs_dataset->parsed()) {
            fs_args.mode = fs_image->parsed() ? "image" : "dataset";
            return cmd_freqstats(fs_args);
        }
        if (selftest->parsed()) return cmd_selftest(st_args);
        if (synth->parsed()) return cmd_synth(sy_args);
        if (train_cmd->parsed()) {
            if (ds_opt->count() > 0) tr_data_seed = tr_data_seed_raw;
            return cmd_train(tr_flags, tr_variant, tr_seed, tr_out, tr_data_seed);
        }
        if (eval_cmd->parsed()) {
            return cmd_eval(ev_ckpt, ev_data, ev_out, ev_threads, ev_threads_given);
        }
        if (ablate_cmd->parsed()) {
            return cmd_ablate(ab_flags, ab_variants, ab_seeds, ab_out);
        }
    } catch (const fdl::ConfigError& e) {
        std::cerr << "fdl: " << e.what() << "\n";
        return kExitUsage;
    } catch (const fdl::DimensionError& e) {
        std::cerr << "fdl: " << e.what() << "\n";
        return kExitUsage;
    } catch (const fdl::DataError& e) {
        std::cerr << "fdl: " << e.what() << "\n";
        return kExitEmptyInput;
    } catch (const fdl::NumericError& e) {
        std::cerr << "fdl: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const fdl::IoError& e) {
        std::cerr << "fdl: " << e.what() << "\n";
        return kExitIo;
    } catch (const fdl::FormatError& e) {
        std::cerr << "fdl: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "fdl: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitUsage;
}
