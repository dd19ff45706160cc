#include "damba/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "damba/error.hpp"

namespace damba {

namespace {

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::vector<WindowInput> build_all_windows(const ModelConfig& cfg, const LoadedDataset& ds) {
  const WindowSet ws =
      make_windows(ds.series.dim(0), cfg.history, cfg.horizon, cfg.horizon);
  std::vector<WindowInput> out;
  out.reserve(static_cast<size_t>(ws.count()));
  for (int start : ws.starts) out.push_back(build_window_input(cfg, ds, start));
  return out;
}

}  // namespace

std::vector<TrainingData> prepare_training_data(const ModelConfig& cfg,
                                                std::vector<LoadedDataset> datasets,
                                                uint64_t seed) {
  Rng seeder(seed);
  std::vector<TrainingData> out;
  out.reserve(datasets.size());
  for (size_t i = 0; i < datasets.size(); ++i) {
    TrainingData td;
    td.dataset = std::move(datasets[i]);
    td.statics = build_domain_static(cfg, td.dataset, seeder.fork(1000 + i).next_u64());
    td.windows = build_all_windows(cfg, td.dataset);
    require(!td.windows.empty(), msg("domain ", td.dataset.name, " has no training windows"));
    out.push_back(std::move(td));
  }
  return out;
}

Trainer::Trainer(DambaModel& model, std::vector<LoadedDataset> datasets, ObjectiveConfig obj,
                 AdamConfig adam, uint64_t seed)
    : model_(model), obj_(obj), adam_(adam), rng_(seed) {
  obj_.validate();
  require(datasets.size() == static_cast<size_t>(model.config().num_domains()),
          "trainer: dataset count must match the model's domain registry");
  for (size_t i = 0; i < datasets.size(); ++i)
    require(datasets[i].name == model.config().domain_names[i],
            msg("trainer: dataset ", datasets[i].name, " does not match registry entry ",
                model.config().domain_names[i]));
  data_ = prepare_training_data(model.config(), std::move(datasets), seed);
}

std::vector<TrainLogRow> Trainer::run_epoch() {
  const double t0 = now_ms();
  const int m = static_cast<int>(data_.size());
  size_t steps = 0;
  for (const TrainingData& td : data_) steps = std::max(steps, td.windows.size());

  std::vector<double> l1_sum(static_cast<size_t>(m), 0.0);
  double sm_sum = 0.0, sr_sum = 0.0, obj_sum = 0.0;

  std::vector<const DomainStatic*> statics(static_cast<size_t>(m));
  std::vector<const WindowInput*> windows(static_cast<size_t>(m));
  std::vector<int> indices(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    statics[static_cast<size_t>(i)] = &data_[static_cast<size_t>(i)].statics;
    indices[static_cast<size_t>(i)] = i;
  }

  for (size_t k = 0; k < steps; ++k) {
    for (int i = 0; i < m; ++i) {
      const auto& wins = data_[static_cast<size_t>(i)].windows;
      windows[static_cast<size_t>(i)] = &wins[k % wins.size()];
    }
    tape_.reset();
    BatchOutput out = model_.forward_batch(tape_, statics, windows, indices, obj_, &rng_);
    const double obj_value = tape_.scalar_value(out.objective);
    if (!std::isfinite(obj_value))
      throw NumericError(msg("training diverged: non-finite objective at epoch ", epoch_ + 1,
                             " step ", k + 1));
    tape_.backward(out.objective);
    adam_.step(model_.store(), tape_);

    for (int i = 0; i < m; ++i)
      l1_sum[static_cast<size_t>(i)] += tape_.scalar_value(out.losses[static_cast<size_t>(i)]);
    sm_sum += tape_.scalar_value(out.s_m);
    sr_sum += tape_.scalar_value(out.s_r);
    obj_sum += obj_value;
  }

  ++epoch_;
  const double wall = now_ms() - t0;
  std::vector<TrainLogRow> rows;
  for (int i = 0; i < m; ++i) {
    TrainLogRow row;
    row.epoch = epoch_;
    row.domain = data_[static_cast<size_t>(i)].dataset.name;
    row.l1 = l1_sum[static_cast<size_t>(i)] / static_cast<double>(steps);
    row.s_m = sm_sum / static_cast<double>(steps);
    row.s_r = sr_sum / static_cast<double>(steps);
    row.objective = obj_sum / static_cast<double>(steps);
    row.wall_ms = wall;
    rows.push_back(std::move(row));
  }
  return rows;
}

AblationTrainer::AblationTrainer(AblationModel& model, std::vector<LoadedDataset> datasets,
                                 AdamConfig adam, uint64_t seed)
    : model_(model), adam_(adam) {
  data_ = prepare_training_data(model.config(), std::move(datasets), seed);
}

void AblationTrainer::run_epoch() {
  const int m = static_cast<int>(data_.size());
  size_t steps = 0;
  for (const TrainingData& td : data_) steps = std::max(steps, td.windows.size());
  std::vector<const DomainStatic*> statics(static_cast<size_t>(m));
  std::vector<const WindowInput*> windows(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) statics[static_cast<size_t>(i)] = &data_[static_cast<size_t>(i)].statics;
  for (size_t k = 0; k < steps; ++k) {
    for (int i = 0; i < m; ++i) {
      const auto& wins = data_[static_cast<size_t>(i)].windows;
      windows[static_cast<size_t>(i)] = &wins[k % wins.size()];
    }
    tape_.reset();
    BatchOutput out = model_.forward_batch(tape_, statics, windows);
    const double obj_value = tape_.scalar_value(out.objective);
    if (!std::isfinite(obj_value))
      throw NumericError(msg("ablation training diverged at epoch ", epoch_ + 1, " step ", k + 1));
    tape_.backward(out.objective);
    adam_.step(model_.store(), tape_);
  }
  ++epoch_;
}

MetricsReport evaluate_dataset(DambaModel& model, const LoadedDataset& ds, EvalMode mode,
                               uint64_t seed) {
  int domain_index = -1;
  if (mode == EvalMode::kInDistribution) {
    domain_index = model.find_domain(ds.name);
    require(domain_index >= 0,
            msg("domain '", ds.name,
                "' is not in the training registry; pass --zero-shot to evaluate it with the "
                "frozen-parameter policy"));
  }
  const ModelConfig& cfg = model.config();
  const DomainStatic st = build_domain_static(cfg, ds, Rng(seed).fork(0xe7a1).next_u64());
  const WindowSet ws = make_windows(ds.series.dim(0), cfg.history, cfg.horizon, cfg.horizon);
  MetricsAccumulator acc;
  for (int start : ws.starts) {
    const WindowInput win = build_window_input(cfg, ds, start);
    const Tensor pred = model.predict_window(st, win, domain_index);
    acc.add(pred, win.target);
  }
  return acc.report();
}

MetricsReport evaluate_dataset(AblationModel& model, const LoadedDataset& ds, uint64_t seed) {
  const ModelConfig& cfg = model.config();
  const DomainStatic st = build_domain_static(cfg, ds, Rng(seed).fork(0xe7a1).next_u64());
  const WindowSet ws = make_windows(ds.series.dim(0), cfg.history, cfg.horizon, cfg.horizon);
  MetricsAccumulator acc;
  for (int start : ws.starts) {
    const WindowInput win = build_window_input(cfg, ds, start);
    const Tensor pred = model.predict_window(st, win);
    acc.add(pred, win.target);
  }
  return acc.report();
}

void write_epoch_log_csv(const std::string& path, const std::vector<TrainLogRow>& rows) {
  std::ofstream out(path);
  require(out.good(), msg("cannot write epoch log: ", path));
  out << "epoch,domain,l1,S_m,S_r,objective,wall_ms\n";
  char buf[256];
  for (const TrainLogRow& r : rows) {
    out << r.epoch << "," << r.domain << ",";
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g,%.9g,%.3f", r.l1, r.s_m, r.s_r, r.objective,
                  r.wall_ms);
    out << buf << "\n";
  }
}

}  // namespace damba
