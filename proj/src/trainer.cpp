#include "fdl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fdl/checkpoint.hpp"
#include "fdl/errors.hpp"
#include "fdl/io_util.hpp"
#include "fdl/parallel.hpp"
#include "fdl/rng.hpp"

namespace fdl {

double poly_lr(double base_lr, std::size_t iter, std::size_t total_iter, double power) {
    if (total_iter == 0) throw ConfigError("poly_lr: total iterations must be positive");
    if (iter >= total_iter) return 0.0;
    const double frac =
        1.0 - static_cast<double>(iter) / static_cast<double>(total_iter);
    return base_lr * std::pow(frac, power);
}

namespace {

constexpr std::uint64_t kShuffleSalt = 0x53485546ull;   // epoch shuffling
constexpr std::uint64_t kTrainDataSalt = 0x545241494Eull;
constexpr std::uint64_t kValDataSalt = 0x56414Cull;

struct ItemGrads {
    double total = 0.0, seg = 0.0, edge = 0.0;
    std::vector<Tensor> grads;  // aligned with net params
};

ItemGrads eval_item(ToyNet& net, const SynthScene& scene, const LossConfig& loss_cfg,
                    const std::vector<Param*>& params) {
    Tape tape;
    ToyNet::Forward fwd = net.forward(tape, scene.image);
    SegLossNodes losses = seg_losses(tape, fwd.logits, scene.labels, loss_cfg);
    ItemGrads out;
    out.total = tape.value(losses.total).data[0];
    out.seg = tape.value(losses.seg).data[0];
    out.edge = tape.value(losses.edge).data[0];
    if (!std::isfinite(out.total)) return out;  // caller aborts; gradients unused
    tape.backward(losses.total);
    out.grads.reserve(params.size());
    for (Param* p : params) out.grads.push_back(tape.param_grad(*p));
    return out;
}

}  // namespace

TrainResult train(ToyNet& net, const std::vector<SynthScene>& data, const TrainConfig& cfg,
                  const std::function<void(std::size_t)>& on_epoch_end) {
    if (data.empty()) throw DataError("train: empty dataset");
    if (cfg.epochs == 0) throw ConfigError("train: epochs must be positive");
    if (cfg.batch_size == 0) throw ConfigError("train: batch size must be positive");

    const std::vector<Param*> params = net.params();
    std::vector<Tensor> momentum;
    momentum.reserve(params.size());
    for (Param* p : params) momentum.push_back(Tensor::zeros(p->value.shape));

    const std::size_t batches_per_epoch = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total_iter = cfg.epochs * batches_per_epoch;

    TrainResult result;
    result.log.reserve(total_iter + 1);

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    std::size_t iter = 0;
    double last_total = 0.0, last_seg = 0.0, last_edge = 0.0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(Rng::mix(Rng::mix(cfg.seed, kShuffleSalt), epoch));
        std::iota(order.begin(), order.end(), 0);
        shuffle_rng.shuffle(order);

        for (std::size_t b = 0; b < batches_per_epoch; ++b) {
            const std::size_t begin = b * cfg.batch_size;
            const std::size_t end = std::min(begin + cfg.batch_size, data.size());
            const std::size_t count = end - begin;

            std::vector<ItemGrads> items(count);
            parallel_for(count, cfg.threads, [&](std::size_t i) {
                items[i] = eval_item(net, data[order[begin + i]], cfg.loss, params);
            });

            // losses and gradients reduce in batch index order
            double mean_total = 0.0, mean_seg = 0.0, mean_edge = 0.0;
            bool finite = true;
            for (const ItemGrads& it : items) {
                mean_total += it.total;
                mean_seg += it.seg;
                mean_edge += it.edge;
                finite = finite && std::isfinite(it.total);
            }
            const double inv = 1.0 / static_cast<double>(count);
            mean_total *= inv;
            mean_seg *= inv;
            mean_edge *= inv;

            const double lr = poly_lr(cfg.base_lr, iter, total_iter, cfg.poly_power);
            result.log.push_back({epoch, iter, lr, mean_total, mean_seg, mean_edge});
            last_total = mean_total;
            last_seg = mean_seg;
            last_edge = mean_edge;

            if (!finite) {
                result.diverged = true;
                result.completed_epochs = epoch;
                return result;
            }

            net.zero_grads();
            for (const ItemGrads& it : items) {
                for (std::size_t pi = 0; pi < params.size(); ++pi) {
                    Tensor& g = params[pi]->grad;
                    const Tensor& ig = it.grads[pi];
                    for (std::size_t k = 0; k < g.size(); ++k) g.data[k] += inv * ig.data[k];
                }
            }
            for (std::size_t pi = 0; pi < params.size(); ++pi) {
                Param& p = *params[pi];
                Tensor& m = momentum[pi];
                for (std::size_t k = 0; k < p.value.size(); ++k) {
                    const double g = p.grad.data[k] + cfg.weight_decay * p.value.data[k];
                    m.data[k] = cfg.momentum * m.data[k] + g;
                    p.value.data[k] -= lr * m.data[k];
                }
            }
            ++iter;
        }
        result.completed_epochs = epoch + 1;
        if (on_epoch_end) on_epoch_end(epoch);
    }
    // schedule endpoint: lr(total_iter) is 0 by the poly rule
    result.log.push_back({cfg.epochs, total_iter,
                          poly_lr(cfg.base_lr, total_iter, total_iter, cfg.poly_power),
                          last_total, last_seg, last_edge});

    if (net.config().variant.kind == Variant::fdl) {
        result.final_lfe_weights = mean_lfe_weights(net, data);
    }
    return result;
}

std::string train_log_csv(const std::vector<TrainLogRow>& log) {
    std::ostringstream os;
    os << "epoch,iter,lr,loss_total,loss_seg,loss_edge\n";
    for (const TrainLogRow& r : log) {
        os << r.epoch << "," << r.iter << "," << fmt_double(r.lr) << ","
           << fmt_double(r.loss_total) << "," << fmt_double(r.loss_seg) << ","
           << fmt_double(r.loss_edge) << "\n";
    }
    return os.str();
}

void write_train_log_csv(const std::filesystem::path& path,
                         const std::vector<TrainLogRow>& log) {
    atomic_write_bytes(path, train_log_csv(log));
}

Tensor mean_lfe_weights(ToyNet& net, const std::vector<SynthScene>& scenes) {
    if (net.config().variant.kind != Variant::fdl || scenes.empty()) return Tensor{};
    Tensor acc({net.config().components()});
    for (const SynthScene& scene : scenes) {
        Tape tape;
        ToyNet::Forward fwd = net.forward(tape, scene.image);
        const Tensor& w = tape.value(*fwd.lfe_weights);
        for (std::size_t i = 0; i < acc.size(); ++i) acc.data[i] += w.data[i];
    }
    for (double& v : acc.data) v /= static_cast<double>(scenes.size());
    return acc;
}

DataSpec parse_data_spec(const std::string& s) {
    const auto c1 = s.find(':');
    const auto c2 = s.find(':', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
        throw ConfigError("data spec '" + s + "' must be <style>:<count>:<seed>");
    }
    DataSpec spec;
    spec.style = parse_style(s.substr(0, c1));
    const std::string count = s.substr(c1 + 1, c2 - c1 - 1);
    const std::string seed = s.substr(c2 + 1);
    if (count.empty() || count.find_first_not_of("0123456789") != std::string::npos ||
        seed.empty() || seed.find_first_not_of("0123456789") != std::string::npos) {
        throw ConfigError("data spec '" + s + "' must use unsigned integers");
    }
    spec.count = std::stoull(count);
    spec.seed = std::stoull(seed);
    if (spec.count == 0) throw ConfigError("data spec '" + s + "' needs a positive count");
    return spec;
}

std::uint64_t derive_train_data_seed(std::uint64_t seed) {
    return Rng::mix(seed, kTrainDataSalt);
}

std::uint64_t derive_val_data_seed(std::uint64_t seed) {
    return Rng::mix(seed, kValDataSalt);
}

IouReport evaluate_net(ToyNet& net, const std::vector<SynthScene>& scenes,
                       std::size_t threads) {
    if (scenes.empty()) throw DataError("evaluate_net: empty scene set");
    std::vector<LabelMap> preds(scenes.size());
    std::vector<LabelMap> gts(scenes.size());
    parallel_for(scenes.size(), threads, [&](std::size_t i) {
        Tape tape;
        ToyNet::Forward fwd = net.forward(tape, scenes[i].image);
        preds[i] = argmax_labels(tape.value(fwd.logits));
        gts[i] = scenes[i].labels;
    });
    return evaluate_miou(preds, gts, net.config().classes);
}

TrainJobResult run_training_job(const TrainJob& job, std::ostream* progress) {
    namespace fs = std::filesystem;
    fs::create_directories(job.out_dir);

    ToyNetConfig net_cfg = job.net;
    net_cfg.variant = job.variant;
    if (net_cfg.variant.kind == Variant::top_k && net_cfg.variant.k == 0) {
        net_cfg.variant.k = net_cfg.components() / 4;  // default quarter of the spectrum
    }

    const std::uint64_t train_seed =
        job.data_seed ? *job.data_seed : derive_train_data_seed(job.seed);
    const std::vector<SynthScene> train_set =
        synth_dataset(job.train_count, train_seed, job.style, net_cfg.input_size,
                      net_cfg.input_size, net_cfg.classes);
    std::vector<SynthScene> val_set;
    if (job.val_count > 0) {
        val_set = synth_dataset(job.val_count, derive_val_data_seed(job.seed), job.style,
                                net_cfg.input_size, net_cfg.input_size, net_cfg.classes);
    }

    ToyNet net(net_cfg, job.seed);
    TrainConfig train_cfg = job.train;
    train_cfg.seed = job.seed;

    const fs::path ckpt_dir = job.out_dir / "checkpoint";
    auto snapshot = [&](std::size_t) { save_checkpoint(ckpt_dir, net); };

    if (progress) {
        (*progress) << "train variant=" << net_cfg.variant.str() << " seed=" << job.seed
                    << " scenes=" << train_set.size() << " epochs=" << train_cfg.epochs
                    << "\n";
    }
    TrainResult result = train(net, train_set, train_cfg, snapshot);

    TrainJobResult out;
    out.diverged = result.diverged;
    out.completed_epochs = result.completed_epochs;
    out.log_path = job.out_dir / "train_log.csv";
    out.checkpoint_dir = ckpt_dir;
    write_train_log_csv(out.log_path, result.log);

    if (result.diverged) {
        if (progress) {
            (*progress) << "diverged after " << result.completed_epochs
                        << " completed epochs; last good checkpoint: "
                        << (result.completed_epochs > 0 ? ckpt_dir.string() : "none") << "\n";
        }
        return out;
    }

    save_checkpoint(ckpt_dir, net);
    if (result.final_lfe_weights.size() > 0) {
        write_lfe_weights_csv(job.out_dir / "lfe_weights.csv", result.final_lfe_weights,
                              net.assignment());
    }

    const std::vector<SynthScene>& eval_set = job.val_count > 0 ? val_set : train_set;
    IouReport report = evaluate_net(net, eval_set, train_cfg.threads);
    out.miou = report.miou;

    std::ostringstream os;
    os << "metric,value\n";
    os << "miou," << fmt_double(report.miou) << "\n";
    for (std::size_t c = 0; c < report.per_class.size(); ++c) {
        if (report.present[c]) {
            os << "iou_class_" << c << "," << fmt_double(report.per_class[c]) << "\n";
        }
    }
    atomic_write_bytes(job.out_dir / "eval_result.csv", os.str());
    return out;
}

std::vector<AblationEntry> ablation_run(const AblationSpec& spec, std::ostream* progress) {
    if (spec.variants.empty() || spec.seeds.empty()) {
        throw ConfigError("ablation_run: need at least one variant and one seed");
    }
    std::vector<AblationEntry> rows;
    for (std::uint64_t seed : spec.seeds) {
        for (const VariantSpec& variant : spec.variants) {
            TrainJob job;
            job.variant = variant;
            job.seed = seed;
            job.style = spec.style;
            job.train_count = spec.train_count;
            job.val_count = spec.val_count;
            job.net = spec.net;
            job.train = spec.train;
            job.out_dir =
                spec.out_dir / (variant.str() + "_s" + std::to_string(seed));
            TrainJobResult res = run_training_job(job, progress);
            if (res.diverged) {
                throw NumericError("ablation_run: training diverged for variant " +
                                   variant.str() + " seed " + std::to_string(seed));
            }
            rows.push_back({variant.str(), seed, res.miou});
            if (progress) {
                (*progress) << "  " << variant.str() << " seed=" << seed
                            << " miou=" << fmt_double(res.miou) << "\n";
            }
        }
    }
    return rows;
}

std::string ablation_csv(const std::vector<AblationEntry>& rows) {
    std::ostringstream os;
    os << "variant,seed,miou\n";
    for (const AblationEntry& r : rows) {
        os << r.variant << "," << r.seed << "," << fmt_double(r.miou) << "\n";
    }
    return os.str();
}

void write_ablation_csv(const std::filesystem::path& path,
                        const std::vector<AblationEntry>& rows) {
    atomic_write_bytes(path, ablation_csv(rows));
}

std::vector<std::tuple<std::string, double, double>> ablation_stats(
    const std::vector<AblationEntry>& rows) {
    std::vector<std::string> names;
    for (const AblationEntry& r : rows) {
        if (std::find(names.begin(), names.end(), r.variant) == names.end()) {
            names.push_back(r.variant);
        }
    }
    std::vector<std::tuple<std::string, double, double>> out;
    for (const std::string& name : names) {
        double mean = 0.0;
        std::size_t count = 0;
        for (const AblationEntry& r : rows) {
            if (r.variant == name) {
                mean += r.miou;
                ++count;
            }
        }
        mean /= static_cast<double>(count);
        double var = 0.0;
        for (const AblationEntry& r : rows) {
            if (r.variant == name) {
                var += (r.miou - mean) * (r.miou - mean);
            }
        }
        var /= static_cast<double>(count);
        out.emplace_back(name, mean, std::sqrt(var));
    }
    return out;
}

}  // namespace fdl
