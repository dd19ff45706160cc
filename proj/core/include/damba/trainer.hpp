#pragma once

#include <string>
#include <vector>

#include "damba/checkpoint.hpp"
#include "damba/dassm.hpp"
#include "damba/optimizer.hpp"
#include "damba/training.hpp"

namespace damba {

struct TrainLogRow {
  int epoch = 0;
  std::string domain;
  double l1 = 0.0, s_m = 0.0, s_r = 0.0, objective = 0.0;
  double wall_ms = 0.0;
};

struct TrainingData {
  LoadedDataset dataset;
  DomainStatic statics;
  std::vector<WindowInput> windows;
};

// Builds the static per-domain context and every training window. Walk
// seeds derive deterministically from the given seed and the domain index.
std::vector<TrainingData> prepare_training_data(const ModelConfig& cfg,
                                                std::vector<LoadedDataset> datasets,
                                                uint64_t seed);

// Multi-domain trainer. Each step takes one window from every domain
// (shorter domains wrap around), forwards the three variants, and applies
// one Adam update on the combined objective. Deterministic under the seed.
class Trainer {
 public:
  Trainer(DambaModel& model, std::vector<LoadedDataset> datasets, ObjectiveConfig obj,
          AdamConfig adam, uint64_t seed);

  std::vector<TrainLogRow> run_epoch();
  int epochs_run() const { return epoch_; }
  Rng& rng() { return rng_; }
  const std::vector<TrainingData>& data() const { return data_; }

 private:
  DambaModel& model_;
  std::vector<TrainingData> data_;
  ObjectiveConfig obj_;
  Adam adam_;
  Rng rng_;
  Tape tape_;
  int epoch_ = 0;
};

// Same loop shape for the ablation (fused selective SSM, plain summed L1).
class AblationTrainer {
 public:
  AblationTrainer(AblationModel& model, std::vector<LoadedDataset> datasets, AdamConfig adam,
                  uint64_t seed);
  void run_epoch();
  const std::vector<TrainingData>& data() const { return data_; }

 private:
  AblationModel& model_;
  std::vector<TrainingData> data_;
  Adam adam_;
  Tape tape_;
  int epoch_ = 0;
};

enum class EvalMode { kInDistribution, kZeroShot };

// Windowed evaluation with stride F (non-overlapping targets). In
// in-distribution mode the dataset name must be a training domain;
// zero-shot mode always routes through the frozen mean-parameter policy.
MetricsReport evaluate_dataset(DambaModel& model, const LoadedDataset& ds, EvalMode mode,
                               uint64_t seed);
MetricsReport evaluate_dataset(AblationModel& model, const LoadedDataset& ds, uint64_t seed);

void write_epoch_log_csv(const std::string& path, const std::vector<TrainLogRow>& rows);

}  // namespace damba
