#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include "fdl/metrics.hpp"
#include "fdl/nn.hpp"
#include "fdl/synth.hpp"
#include "fdl/toynet.hpp"

namespace fdl {

struct TrainConfig {
    double base_lr = 5e-3;
    double weight_decay = 5e-4;
    double momentum = 0.9;
    double poly_power = 0.9;
    std::size_t epochs = 40;
    std::size_t batch_size = 8;
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    LossConfig loss;
};

/// base_lr * (1 - iter/total_iter)^power; strictly decreasing in iter and 0
/// at iter == total_iter.
double poly_lr(double base_lr, std::size_t iter, std::size_t total_iter, double power);

struct TrainLogRow {
    std::size_t epoch = 0;
    std::size_t iter = 0;
    double lr = 0.0;
    double loss_total = 0.0;
    double loss_seg = 0.0;
    double loss_edge = 0.0;
};

struct TrainResult {
    std::vector<TrainLogRow> log;  // one row per iteration plus the schedule endpoint
    bool diverged = false;
    std::size_t completed_epochs = 0;
    Tensor final_lfe_weights;      // mean over training scenes; empty unless learnable
};

/// SGD with momentum, weight decay and the poly schedule. Batch items are
/// evaluated on independent tapes (optionally across cfg.threads workers) and
/// reduced in index order, so results are identical for any thread count.
/// Stops early with diverged=true when a non-finite loss appears.
TrainResult train(ToyNet& net, const std::vector<SynthScene>& data, const TrainConfig& cfg,
                  const std::function<void(std::size_t)>& on_epoch_end = {});

/// Log CSV, header: epoch,iter,lr,loss_total,loss_seg,loss_edge
std::string train_log_csv(const std::vector<TrainLogRow>& log);
void write_train_log_csv(const std::filesystem::path& path,
                         const std::vector<TrainLogRow>& log);

/// Mean LFE weight vector of a trained net over a scene set (learnable
/// variant only; returns an empty tensor otherwise).
Tensor mean_lfe_weights(ToyNet& net, const std::vector<SynthScene>& scenes);

/// Dataset recipe "style:count:seed", e.g. "night:40:7".
struct DataSpec {
    SceneStyle style = SceneStyle::night;
    std::size_t count = 0;
    std::uint64_t seed = 0;
};
DataSpec parse_data_spec(const std::string& s);

// ---- orchestration shared by the CLI and the acceptance suite ----

struct TrainJob {
    VariantSpec variant{Variant::fdl, 0};
    std::uint64_t seed = 1;
    SceneStyle style = SceneStyle::night;
    std::size_t train_count = 120;
    std::size_t val_count = 40;
    std::optional<std::uint64_t> data_seed;  // default: derived from seed
    ToyNetConfig net;
    TrainConfig train;
    std::filesystem::path out_dir;
};

struct TrainJobResult {
    double miou = 0.0;
    bool diverged = false;
    std::size_t completed_epochs = 0;
    std::filesystem::path log_path;
    std::filesystem::path checkpoint_dir;
};

/// Generates data, trains, checkpoints every epoch, writes the training log
/// and evaluation result files under job.out_dir, and evaluates mIoU on the
/// validation split (or on the training split when val_count == 0).
TrainJobResult run_training_job(const TrainJob& job, std::ostream* progress = nullptr);

/// Evaluates a net over scenes; returns the aggregated IoU report.
IouReport evaluate_net(ToyNet& net, const std::vector<SynthScene>& scenes,
                       std::size_t threads = 1);

std::uint64_t derive_train_data_seed(std::uint64_t seed);
std::uint64_t derive_val_data_seed(std::uint64_t seed);

struct AblationEntry {
    std::string variant;
    std::uint64_t seed = 0;
    double miou = 0.0;
};

struct AblationSpec {
    std::vector<VariantSpec> variants;
    std::vector<std::uint64_t> seeds;
    SceneStyle style = SceneStyle::night;
    std::size_t train_count = 120;
    std::size_t val_count = 40;
    ToyNetConfig net;
    TrainConfig train;
    std::filesystem::path out_dir;
};

/// Trains every (variant, seed) pair on shared per-seed data and schedule.
std::vector<AblationEntry> ablation_run(const AblationSpec& spec,
                                        std::ostream* progress = nullptr);

/// Ablation CSV, header: variant,seed,miou
std::string ablation_csv(const std::vector<AblationEntry>& rows);
void write_ablation_csv(const std::filesystem::path& path,
                        const std::vector<AblationEntry>& rows);

/// Mean and population standard deviation of mIoU per variant, in first-seen
/// variant order.
std::vector<std::tuple<std::string, double, double>> ablation_stats(
    const std::vector<AblationEntry>& rows);

}  // namespace fdl
