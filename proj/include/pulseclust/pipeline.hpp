#pragma once

#include <filesystem>
#include <string>

#include "pulseclust/augment.hpp"
#include "pulseclust/clustering.hpp"
#include "pulseclust/dataset.hpp"
#include "pulseclust/encoder.hpp"
#include "pulseclust/losses.hpp"

namespace pulseclust {

struct StageConfig {
  std::string optimizer = "sgd";  // "sgd" | "adam"
  double lr = 1e-4;
  double momentum = 0.9;
  int batch_size = 512;
  int max_epochs = 30;
  double temperature = 1.0;
  int num_reliable = 200;  // per-center K (stage 2) / M (stage 3)
  double lambda = 1.0;     // unlabeled loss weight (stage 3)
  double tau_max = 0.99;   // confidence ceiling (stage 3)
  int labeled_batch = 64;  // labeled sub-batch (stage 3)
  std::string aug_a = "strong";  // stage 1/2 views; stage 3 weak branch
  std::string aug_b = "strong";  // stage 3 strong branch
  double min_rel_improvement = 1e-3;  // stop rule
  int patience = 5;
  std::string lr_schedule = "constant";  // "constant" | "cosine"
  int warmup_epochs = 0;

  double lr_at(int epoch) const;
};

struct RunConfig {
  std::filesystem::path data_dir;
  std::string dataset_name = "toy";
  EncoderConfig encoder;
  StageConfig stage1, stage2, stage3;
  int num_clusters = 12;
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "out";
  /// Frequency-offset draw range applied to every stage's policies; wide
  /// enough offsets let the offset+conjugate pair bridge mirrored spectra.
  double aug_max_freq_offset_hz = 10e6;

  AugmentationPolicy policy(const std::string& tier) const;

  /// 4-class laptop configuration: scaled encoder, batch 64, Table-4 style
  /// stage settings with learning rates tuned for the small run.
  static RunConfig desk_default();
  /// Full 12-class configuration with the published stage settings.
  static RunConfig full_default();
  /// Reads a JSON config; missing keys keep the given base's values.
  static RunConfig from_json_file(const std::filesystem::path& path, RunConfig base);

  std::string to_json() const;
};

struct MetricsRow {
  std::string stage;
  std::string dataset;
  std::string snr_db;  // "all" or a level
  double acc = 0, nmi = 0, ari = 0, purity = 0;
};

struct StageStats {
  int epochs = 0;
  double final_loss = 0.0;
  std::vector<double> epoch_losses;
  std::vector<double> confident_fraction;      // stage 3 only
  std::vector<Eigen::ArrayXd> threshold_rows;  // stage 3 only, per epoch
  int skipped_anchors = 0;                     // stage 2 only
};

/// Orchestrates the three training stages on one dataset and evaluates
/// checkpoints. All randomness is derived from config.seed, partitioned per
/// stage/epoch/batch, so runs are reproducible.
class Pipeline {
 public:
  Pipeline(RunConfig config, Dataset dataset);

  StageStats run_stage1();
  StageStats run_stage2();
  StageStats run_stage3();

  /// Eval-mode features for a dataset (L2-normalized rows by default).
  Eigen::MatrixXd features(const Dataset& ds, bool normalize = true);
  /// Eval-mode softmax of the projection head.
  Eigen::MatrixXd head_probs(const Dataset& ds);
  /// argmax of head_probs.
  std::vector<int> predict(const Dataset& ds);

  struct Report {
    std::vector<MetricsRow> rows;
    Eigen::MatrixXi confusion;        // truth x matched-pred counts
    std::vector<int> class_ids;       // row/col order of the confusion
  };
  Report evaluate(const Dataset& ds, int num_clusters, bool use_head, const std::string& stage_name);

  struct SweepRow {
    int num_clusters = 0;
    double silhouette_score = 0.0;  // NaN when undefined (C < 2)
    double purity_score = 0.0;
  };
  struct SweepReport {
    std::vector<SweepRow> rows;
    int best_num_clusters = 0;  // argmax silhouette
  };
  SweepReport sweep_clusters(const Dataset& ds, int c_lo, int c_hi);

  void save_stage(int stage) const;
  /// Loads <out_dir>/stage<N>.ckpt into the model; returns false if absent.
  bool load_stage(int stage);

  TransCnn<float>& model() { return model_; }
  const RunConfig& config() const { return cfg_; }
  const Dataset& dataset() const { return data_; }

  /// Builds an augmented-view batch tensor; exposed for tests.
  TensorF view_batch(const Dataset& ds, const std::vector<Eigen::Index>& indices,
                     const AugmentationPolicy& policy, std::uint64_t seed, bool two_views) const;

 private:
  Eigen::MatrixXd forward_all(const Dataset& ds, bool want_probs, bool normalize);

  RunConfig cfg_;
  Dataset data_;
  TransCnn<float> model_;
};

/// Loads the encoder config + stage from a checkpoint and rebuilds a model.
TransCnn<float> load_model_checkpoint(const std::filesystem::path& path, int* stage = nullptr,
                                      int* num_clusters = nullptr);

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);
void write_confusion_csv(const std::filesystem::path& path, const Pipeline::Report& report);
void write_thresholds_csv(const std::filesystem::path& path, const StageStats& stage3);
void write_sweep_csv(const std::filesystem::path& path, const Pipeline::SweepReport& report);

}  // namespace pulseclust
