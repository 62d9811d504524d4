#include "pulseclust/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <thread>

#include <json.hpp>

namespace pulseclust {

namespace {

constexpr std::uint64_t kStageTag[4] = {0x50, 0x51, 0x52, 0x53};

void parallel_for(Eigen::Index n, const std::function<void(Eigen::Index)>& fn) {
  const unsigned workers =
      std::min<unsigned>(std::max(1u, std::thread::hardware_concurrency()), 8u);
  if (workers <= 1 || n < 4) {
    for (Eigen::Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<Eigen::Index> cursor{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (;;) {
        const Eigen::Index i = cursor.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  for (auto& t : pool) t.join();
}

std::vector<Eigen::Index> shuffled_indices(Eigen::Index n, std::uint64_t seed) {
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  RandomSource rng(seed);
  for (Eigen::Index i = n - 1; i > 0; --i)
    std::swap(order[i], order[rng.uniform_int(0, i)]);
  return order;
}

/// Stop rule: halt when the epoch loss has not improved on the best by a
/// relative margin for `patience` consecutive epochs.
struct EarlyStop {
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  double min_rel;
  int patience;
  EarlyStop(double min_rel_, int patience_) : min_rel(min_rel_), patience(patience_) {}
  bool should_stop(double loss) {
    if (!std::isfinite(best) || loss < best - min_rel * std::abs(best)) {
      best = loss;
      stale = 0;
    } else {
      ++stale;
    }
    return stale >= patience;
  }
};

nlohmann::json encoder_to_json(const EncoderConfig& c) {
  return {{"frame_len", c.frame_len},
          {"in_channels", c.in_channels},
          {"conv_channels", c.conv_channels},
          {"kernel_sizes", c.kernel_sizes},
          {"pool_windows", c.pool_windows},
          {"pool_avg", c.pool_avg},
          {"max_aggregation", c.max_aggregation},
          {"num_transformer_layers", c.num_transformer_layers},
          {"num_heads", c.num_heads},
          {"ffn_dim", c.ffn_dim},
          {"feature_dim", c.feature_dim},
          {"projection_dim", c.projection_dim}};
}

EncoderConfig encoder_from_json(const nlohmann::json& j, EncoderConfig c) {
  c.frame_len = j.value("frame_len", c.frame_len);
  c.in_channels = j.value("in_channels", c.in_channels);
  c.conv_channels = j.value("conv_channels", c.conv_channels);
  c.kernel_sizes = j.value("kernel_sizes", c.kernel_sizes);
  c.pool_windows = j.value("pool_windows", c.pool_windows);
  c.pool_avg = j.value("pool_avg", c.pool_avg);
  c.max_aggregation = j.value("max_aggregation", c.max_aggregation);
  c.num_transformer_layers = j.value("num_transformer_layers", c.num_transformer_layers);
  c.num_heads = j.value("num_heads", c.num_heads);
  c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
  c.feature_dim = j.value("feature_dim", c.feature_dim);
  c.projection_dim = j.value("projection_dim", c.projection_dim);
  return c;
}

nlohmann::json stage_to_json(const StageConfig& s) {
  return {{"optimizer", s.optimizer},
          {"lr", s.lr},
          {"momentum", s.momentum},
          {"batch_size", s.batch_size},
          {"max_epochs", s.max_epochs},
          {"temperature", s.temperature},
          {"num_reliable", s.num_reliable},
          {"lambda", s.lambda},
          {"tau_max", s.tau_max},
          {"labeled_batch", s.labeled_batch},
          {"aug_a", s.aug_a},
          {"aug_b", s.aug_b},
          {"min_rel_improvement", s.min_rel_improvement},
          {"patience", s.patience},
          {"lr_schedule", s.lr_schedule},
          {"warmup_epochs", s.warmup_epochs}};
}

StageConfig stage_from_json(const nlohmann::json& j, StageConfig s) {
  s.optimizer = j.value("optimizer", s.optimizer);
  s.lr = j.value("lr", s.lr);
  s.momentum = j.value("momentum", s.momentum);
  s.batch_size = j.value("batch_size", s.batch_size);
  s.max_epochs = j.value("max_epochs", s.max_epochs);
  s.temperature = j.value("temperature", s.temperature);
  s.num_reliable = j.value("num_reliable", s.num_reliable);
  s.lambda = j.value("lambda", s.lambda);
  s.tau_max = j.value("tau_max", s.tau_max);
  s.labeled_batch = j.value("labeled_batch", s.labeled_batch);
  s.aug_a = j.value("aug_a", s.aug_a);
  s.aug_b = j.value("aug_b", s.aug_b);
  s.min_rel_improvement = j.value("min_rel_improvement", s.min_rel_improvement);
  s.patience = j.value("patience", s.patience);
  s.lr_schedule = j.value("lr_schedule", s.lr_schedule);
  s.warmup_epochs = j.value("warmup_epochs", s.warmup_epochs);
  return s;
}

}  // namespace

AugmentationPolicy RunConfig::policy(const std::string& tier) const {
  AugmentationPolicy p = AugmentationPolicy::from_name(tier);
  p.params.max_freq_offset_hz = aug_max_freq_offset_hz;
  return p;
}

double StageConfig::lr_at(int epoch) const {
  double factor = 1.0;
  if (warmup_epochs > 0 && epoch < warmup_epochs)
    factor = static_cast<double>(epoch + 1) / warmup_epochs;
  else if (lr_schedule == "cosine")
    factor = 0.5 * (1.0 + std::cos(std::numbers::pi * (epoch - warmup_epochs) /
                                   std::max(1, max_epochs - warmup_epochs)));
  return lr * factor;
}

RunConfig RunConfig::desk_default() {
  RunConfig c;
  c.dataset_name = "toy";
  c.num_clusters = 4;
  c.encoder = EncoderConfig::desk_scale(4, c.num_clusters);
  c.encoder.pool_windows = {4, 4, 2, 2};  // 16 sequence positions: laptop-sized attention
  c.seed = 1;

  c.stage1.optimizer = "sgd";
  c.stage1.lr = 0.05;
  c.stage1.momentum = 0.9;
  c.stage1.batch_size = 64;
  c.stage1.max_epochs = 30;
  c.stage1.temperature = 1.0;
  c.stage1.aug_a = "strong";
  c.stage1.aug_b = "strong";

  c.stage2 = c.stage1;
  c.stage2.lr = 0.02;
  c.stage2.max_epochs = 15;
  c.stage2.num_reliable = 40;

  c.stage3.optimizer = "adam";
  c.stage3.lr = 2e-4;
  c.stage3.batch_size = 64;
  c.stage3.labeled_batch = 32;
  c.stage3.max_epochs = 15;
  c.stage3.num_reliable = 60;
  c.stage3.lambda = 1.0;
  c.stage3.tau_max = 0.99;
  c.stage3.aug_a = "weak";
  c.stage3.aug_b = "moderate";
  return c;
}

RunConfig RunConfig::full_default() {
  RunConfig c;
  c.dataset_name = "dataset1";
  c.num_clusters = 12;
  c.encoder = EncoderConfig{};
  c.encoder.projection_dim = 12;

  c.stage1.optimizer = "sgd";
  c.stage1.lr = 1e-4;
  c.stage1.momentum = 0.9;
  c.stage1.batch_size = 512;
  c.stage1.max_epochs = 200;
  c.stage1.temperature = 1.0;
  c.stage1.aug_a = "strong";
  c.stage1.aug_b = "strong";

  c.stage2 = c.stage1;
  c.stage2.num_reliable = 200;

  c.stage3 = c.stage1;
  c.stage3.optimizer = "adam";
  c.stage3.lr = 2e-4;
  c.stage3.num_reliable = 300;
  c.stage3.labeled_batch = 128;
  c.stage3.lambda = 1.0;
  c.stage3.tau_max = 0.99;
  c.stage3.aug_a = "weak";
  c.stage3.aug_b = "moderate";
  return c;
}

RunConfig RunConfig::from_json_file(const std::filesystem::path& path, RunConfig base) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open " + path.string());
  nlohmann::json j;
  is >> j;
  base.data_dir = j.value("data_dir", base.data_dir.string());
  base.dataset_name = j.value("dataset_name", base.dataset_name);
  base.num_clusters = j.value("num_clusters", base.num_clusters);
  base.seed = j.value("seed", base.seed);
  base.out_dir = j.value("out_dir", base.out_dir.string());
  base.aug_max_freq_offset_hz = j.value("aug_max_freq_offset_hz", base.aug_max_freq_offset_hz);
  if (j.contains("encoder")) base.encoder = encoder_from_json(j["encoder"], base.encoder);
  if (j.contains("stage1")) base.stage1 = stage_from_json(j["stage1"], base.stage1);
  if (j.contains("stage2")) base.stage2 = stage_from_json(j["stage2"], base.stage2);
  if (j.contains("stage3")) base.stage3 = stage_from_json(j["stage3"], base.stage3);
  base.encoder.validate();
  return base;
}

std::string RunConfig::to_json() const {
  nlohmann::json j{{"data_dir", data_dir.string()},
                   {"dataset_name", dataset_name},
                   {"num_clusters", num_clusters},
                   {"seed", seed},
                   {"out_dir", out_dir.string()},
                   {"aug_max_freq_offset_hz", aug_max_freq_offset_hz},
                   {"encoder", encoder_to_json(encoder)},
                   {"stage1", stage_to_json(stage1)},
                   {"stage2", stage_to_json(stage2)},
                   {"stage3", stage_to_json(stage3)}};
  return j.dump(2);
}

Pipeline::Pipeline(RunConfig config, Dataset dataset)
    : cfg_(std::move(config)), data_(std::move(dataset)), model_(cfg_.encoder, cfg_.seed) {
  data_.validate();
}

TensorF Pipeline::view_batch(const Dataset& ds, const std::vector<Eigen::Index>& indices,
                             const AugmentationPolicy& policy, std::uint64_t seed,
                             bool two_views) const {
  const Eigen::Index frame_len = ds.manifest.frame_len;
  const Eigen::Index views = two_views ? 2 : 1;
  const auto n = static_cast<Eigen::Index>(indices.size()) * views;
  TensorF batch = TensorF::zeros({n, 2, frame_len});
  float* dst = batch.value().data();
  parallel_for(n, [&](Eigen::Index v) {
    const Eigen::Index sample = indices[v / views];
    RandomSource rng(derive_seed(seed, {static_cast<std::uint64_t>(v)}));
    IqSignal aug = apply_policy(ds.iq_signal(sample), policy, rng, frame_len);
    float* row = dst + v * 2 * frame_len;
    for (Eigen::Index k = 0; k < frame_len; ++k) {
      row[k] = static_cast<float>(aug.samples[k].real());
      row[frame_len + k] = static_cast<float>(aug.samples[k].imag());
    }
  });
  return batch;
}

Eigen::MatrixXd Pipeline::forward_all(const Dataset& ds, bool want_probs, bool normalize) {
  NoGradGuard guard;
  const Eigen::Index n = ds.size();
  const Eigen::Index frame_len = ds.manifest.frame_len;
  const Eigen::Index bs = 256;
  Eigen::MatrixXd out;
  for (Eigen::Index start = 0; start < n; start += bs) {
    const Eigen::Index rows = std::min(bs, n - start);
    TensorF batch = TensorF::zeros({rows, 2, frame_len});
    float* dst = batch.value().data();
    parallel_for(rows, [&](Eigen::Index r) {
      const float* src = ds.frame_data(start + r);
      float* row = dst + r * 2 * frame_len;
      for (Eigen::Index k = 0; k < frame_len; ++k) {
        row[k] = src[2 * k];
        row[frame_len + k] = src[2 * k + 1];
      }
    });
    auto res = model_.forward(batch, /*training=*/false);
    TensorF val = want_probs ? softmax(res.projections) : res.features;
    if (out.size() == 0) out.resize(n, val.dim(1));
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < val.dim(1); ++c)
        out(start + r, c) = static_cast<double>(val.value()[r * val.dim(1) + c]);
  }
  if (!want_probs && normalize)
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      const double norm = out.row(r).norm();
      if (norm > 0) out.row(r) /= norm;
    }
  return out;
}

Eigen::MatrixXd Pipeline::features(const Dataset& ds, bool normalize) {
  return forward_all(ds, false, normalize);
}

Eigen::MatrixXd Pipeline::head_probs(const Dataset& ds) { return forward_all(ds, true, false); }

std::vector<int> Pipeline::predict(const Dataset& ds) {
  Eigen::MatrixXd probs = head_probs(ds);
  std::vector<int> out(probs.rows());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index arg = 0;
    probs.row(i).maxCoeff(&arg);
    out[i] = static_cast<int>(arg);
  }
  return out;
}

StageStats Pipeline::run_stage1() {
  const StageConfig& sc = cfg_.stage1;
  auto params = model_.parameters();
  std::vector<TensorF::Storage> velocity;
  AdamState<float> adam;
  const auto policy_a = cfg_.policy(sc.aug_a);
  const auto policy_b = cfg_.policy(sc.aug_b);

  StageStats stats;
  EarlyStop stop(sc.min_rel_improvement, sc.patience);
  for (int epoch = 0; epoch < sc.max_epochs; ++epoch) {
    const auto order =
        shuffled_indices(data_.size(), derive_seed(cfg_.seed, {kStageTag[1], 0xF00, (std::uint64_t)epoch}));
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start + 2 <= order.size(); start += sc.batch_size) {
      const auto count = std::min<std::size_t>(sc.batch_size, order.size() - start);
      if (count < 2) break;
      std::vector<Eigen::Index> idx(order.begin() + start, order.begin() + start + count);
      const std::uint64_t bseed =
          derive_seed(cfg_.seed, {kStageTag[1], (std::uint64_t)epoch, (std::uint64_t)batches});
      // adjacent rows hold the two views of each sample; both use the same
      // tier but independent draws
      TensorF views = TensorF::zeros({(Eigen::Index)count * 2, 2, data_.manifest.frame_len});
      {
        TensorF va = view_batch(data_, idx, policy_a, derive_seed(bseed, {0xA}), false);
        TensorF vb = view_batch(data_, idx, policy_b, derive_seed(bseed, {0xB}), false);
        const Eigen::Index stride = 2 * data_.manifest.frame_len;
        for (std::size_t i = 0; i < count; ++i) {
          views.value().segment((2 * i) * stride, stride) = va.value().segment(i * stride, stride);
          views.value().segment((2 * i + 1) * stride, stride) = vb.value().segment(i * stride, stride);
        }
      }
      auto out = model_.forward(views, /*training=*/true);
      TensorF emb = l2_normalize_rows(out.projections);
      TensorF loss = scale(ntxent_loss(emb, sc.temperature), 1.0f / (2.0f * count));
      zero_grads(params);
      loss.backward();
      if (sc.optimizer == "adam")
        adam_step(params, adam, sc.lr_at(epoch));
      else
        sgd_step(params, velocity, sc.lr_at(epoch), sc.momentum);
      epoch_loss += loss.item();
      ++batches;
    }
    epoch_loss /= std::max(batches, 1);
    stats.epoch_losses.push_back(epoch_loss);
    stats.final_loss = epoch_loss;
    stats.epochs = epoch + 1;
    if (stop.should_stop(epoch_loss)) break;
  }
  save_stage(1);
  return stats;
}

StageStats Pipeline::run_stage2() {
  const StageConfig& sc = cfg_.stage2;
  auto params = model_.parameters();
  std::vector<TensorF::Storage> velocity;
  AdamState<float> adam;
  const auto policy = cfg_.policy(sc.aug_a);

  StageStats stats;
  EarlyStop stop(sc.min_rel_improvement, sc.patience);
  for (int epoch = 0; epoch < sc.max_epochs; ++epoch) {
    // re-mine reliable samples from the current representation
    Eigen::MatrixXd feats = features(data_);
    ClusterResult km =
        kmeans(feats, cfg_.num_clusters, derive_seed(cfg_.seed, {kStageTag[2], 0x6B, (std::uint64_t)epoch}));
    PseudoLabelSet mined = mine_reliable(feats, km.centers,
                                         std::min<Eigen::Index>(sc.num_reliable, data_.size()));

    const auto order = shuffled_indices(
        mined.indices.size(), derive_seed(cfg_.seed, {kStageTag[2], 0xF00, (std::uint64_t)epoch}));
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start + 2 <= order.size(); start += sc.batch_size) {
      const auto count = std::min<std::size_t>(sc.batch_size, order.size() - start);
      if (count < 2) break;
      std::vector<Eigen::Index> idx(count);
      std::vector<int> labels(count);
      for (std::size_t i = 0; i < count; ++i) {
        idx[i] = mined.indices[order[start + i]];
        labels[i] = mined.labels[order[start + i]];
      }
      const std::uint64_t bseed =
          derive_seed(cfg_.seed, {kStageTag[2], (std::uint64_t)epoch, (std::uint64_t)batches});
      TensorF views = view_batch(data_, idx, policy, bseed, false);
      auto out = model_.forward(views, /*training=*/true);
      TensorF emb = l2_normalize_rows(out.projections);
      int skipped = 0;
      TensorF loss = supcon_loss(emb, labels, sc.temperature, &skipped);
      stats.skipped_anchors += skipped;
      const int anchors = static_cast<int>(count) - skipped;
      if (anchors <= 0) continue;
      loss = scale(loss, 1.0f / anchors);
      zero_grads(params);
      loss.backward();
      if (sc.optimizer == "adam")
        adam_step(params, adam, sc.lr_at(epoch));
      else
        sgd_step(params, velocity, sc.lr_at(epoch), sc.momentum);
      epoch_loss += loss.item();
      ++batches;
    }
    epoch_loss /= std::max(batches, 1);
    stats.epoch_losses.push_back(epoch_loss);
    stats.final_loss = epoch_loss;
    stats.epochs = epoch + 1;
    if (stop.should_stop(epoch_loss)) break;
  }
  save_stage(2);
  return stats;
}

StageStats Pipeline::run_stage3() {
  const StageConfig& sc = cfg_.stage3;
  auto params = model_.parameters();
  std::vector<TensorF::Storage> velocity;
  AdamState<float> adam;
  const auto weak_policy = cfg_.policy(sc.aug_a);
  const auto strong_policy = cfg_.policy(sc.aug_b);

  // one-time mining of the labeled set from the fine-tuned representation
  Eigen::MatrixXd feats = features(data_);
  ClusterResult km = kmeans(feats, cfg_.num_clusters, derive_seed(cfg_.seed, {kStageTag[3], 0x6B}));
  PseudoLabelSet mined =
      mine_reliable(feats, km.centers, std::min<Eigen::Index>(sc.num_reliable, data_.size()));
  mined.source_stage = 3;

  std::vector<char> is_labeled(data_.size(), 0);
  for (auto i : mined.indices) is_labeled[i] = 1;
  std::vector<Eigen::Index> unlabeled;
  for (Eigen::Index i = 0; i < data_.size(); ++i)
    if (!is_labeled[i]) unlabeled.push_back(i);

  ThresholdState thresholds(cfg_.num_clusters, sc.tau_max, sc.lambda);

  StageStats stats;
  EarlyStop stop(sc.min_rel_improvement, sc.patience);
  for (int epoch = 0; epoch < sc.max_epochs; ++epoch) {
    thresholds.begin_epoch();
    const auto u_order = shuffled_indices(
        unlabeled.size(), derive_seed(cfg_.seed, {kStageTag[3], 0xF00, (std::uint64_t)epoch}));
    const auto l_order = shuffled_indices(
        mined.indices.size(), derive_seed(cfg_.seed, {kStageTag[3], 0xF01, (std::uint64_t)epoch}));

    double epoch_loss = 0.0;
    Eigen::Index confident = 0, seen = 0;
    std::size_t l_cursor = 0;
    int batches = 0;
    const std::size_t num_batches =
        unlabeled.empty() ? mined.indices.size() / std::max(1, sc.labeled_batch) + 1
                          : (unlabeled.size() + sc.batch_size - 1) / sc.batch_size;
    for (std::size_t b = 0; b < num_batches; ++b) {
      const std::uint64_t bseed =
          derive_seed(cfg_.seed, {kStageTag[3], (std::uint64_t)epoch, (std::uint64_t)b});

      // labeled sub-batch, cycling through the mined set
      std::vector<Eigen::Index> lidx;
      std::vector<int> ltargets;
      for (int i = 0; i < sc.labeled_batch && !mined.indices.empty(); ++i) {
        const auto pos = l_order[l_cursor % l_order.size()];
        ++l_cursor;
        lidx.push_back(mined.indices[pos]);
        ltargets.push_back(mined.labels[pos]);
      }
      TensorF labeled_views = view_batch(data_, lidx, weak_policy, derive_seed(bseed, {0x1A}), false);

      std::vector<Eigen::Index> uidx;
      if (!unlabeled.empty()) {
        const std::size_t start = b * sc.batch_size;
        for (std::size_t i = start; i < std::min(start + sc.batch_size, u_order.size()); ++i)
          uidx.push_back(unlabeled[u_order[i]]);
      }

      Eigen::MatrixXd weak_probs(uidx.size(), cfg_.num_clusters);
      if (!uidx.empty()) {
        NoGradGuard guard;
        TensorF weak_views = view_batch(data_, uidx, weak_policy, derive_seed(bseed, {0x1B}), false);
        auto weak_out = model_.forward(weak_views, /*training=*/false);
        TensorF probs = softmax(weak_out.projections);
        for (std::size_t r = 0; r < uidx.size(); ++r)
          for (int c = 0; c < cfg_.num_clusters; ++c)
            weak_probs(r, c) = static_cast<double>(probs.value()[r * cfg_.num_clusters + c]);
        thresholds = update_thresholds(std::move(thresholds), weak_probs);
      }

      auto labeled_out = model_.forward(labeled_views, /*training=*/true);
      SemiLoss<float> semi;
      if (!uidx.empty()) {
        TensorF strong_views =
            view_batch(data_, uidx, strong_policy, derive_seed(bseed, {0x1C}), false);
        auto strong_out = model_.forward(strong_views, /*training=*/true);
        semi = semi_supervised_loss(labeled_out.projections, ltargets, weak_probs,
                                    strong_out.projections, thresholds);
      } else {
        Eigen::MatrixXd empty(0, cfg_.num_clusters);
        TensorF empty_logits = TensorF::zeros({0, cfg_.num_clusters});
        semi = semi_supervised_loss(labeled_out.projections, ltargets, empty, empty_logits,
                                    thresholds);
      }
      confident += semi.confident_count;
      seen += static_cast<Eigen::Index>(uidx.size());

      zero_grads(params);
      semi.total.backward();
      if (sc.optimizer == "adam")
        adam_step(params, adam, sc.lr_at(epoch));
      else
        sgd_step(params, velocity, sc.lr_at(epoch), sc.momentum);
      epoch_loss += semi.total.item();
      ++batches;
    }
    epoch_loss /= std::max(batches, 1);
    stats.epoch_losses.push_back(epoch_loss);
    stats.confident_fraction.push_back(seen > 0 ? static_cast<double>(confident) / seen : 0.0);
    stats.threshold_rows.push_back(thresholds.tau);
    stats.final_loss = epoch_loss;
    stats.epochs = epoch + 1;
    if (stop.should_stop(epoch_loss)) break;
  }
  save_stage(3);
  return stats;
}

Pipeline::Report Pipeline::evaluate(const Dataset& ds, int num_clusters, bool use_head,
                                    const std::string& stage_name) {
  std::vector<int> pred;
  if (use_head) {
    pred = predict(ds);
  } else {
    Eigen::MatrixXd feats = features(ds);
    pred = kmeans(feats, num_clusters, derive_seed(cfg_.seed, {0xE7A1})).assignments;
  }
  const std::vector<int> truth = ds.labels();

  Report report;
  auto push_row = [&](const std::string& snr, const std::vector<int>& p, const std::vector<int>& t) {
    report.rows.push_back({stage_name, ds.manifest.name, snr, clustering_accuracy(p, t), nmi(p, t),
                           ari(p, t), purity(p, t)});
  };
  push_row("all", pred, truth);

  std::set<double> levels;
  for (const auto& r : ds.manifest.records) levels.insert(r.snr_db);
  if (levels.size() >= 2 && levels.size() <= 30) {
    for (double level : levels) {
      std::vector<int> p, t;
      for (Eigen::Index i = 0; i < ds.size(); ++i)
        if (ds.manifest.records[i].snr_db == level) {
          p.push_back(pred[i]);
          t.push_back(truth[i]);
        }
      std::ostringstream os;
      os << level;
      push_row(os.str(), p, t);
    }
  }

  // confusion with predictions matched to truth ids
  std::map<int, int> truth_ids;
  for (int t : truth) truth_ids.emplace(t, 0);
  int next = 0;
  for (auto& [k, v] : truth_ids) v = next++;  // sorted class codes
  std::map<int, int> pred_ids;
  for (int p : pred) pred_ids.emplace(p, 0);
  next = 0;
  for (auto& [k, v] : pred_ids) v = next++;
  const int dim = std::max({static_cast<int>(truth_ids.size()), static_cast<int>(pred_ids.size())});
  Eigen::MatrixXd weights = Eigen::MatrixXd::Zero(dim, dim);
  for (std::size_t i = 0; i < pred.size(); ++i)
    weights(pred_ids[pred[i]], truth_ids[truth[i]]) += 1.0;
  const auto match = detail::hungarian_max(weights);
  report.confusion = Eigen::MatrixXi::Zero(truth_ids.size(), truth_ids.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int mapped = match[pred_ids[pred[i]]];
    if (mapped < static_cast<int>(truth_ids.size()))
      report.confusion(truth_ids[truth[i]], mapped) += 1;
  }
  for (const auto& [code, id] : truth_ids) report.class_ids.push_back(code);
  return report;
}

Pipeline::SweepReport Pipeline::sweep_clusters(const Dataset& ds, int c_lo, int c_hi) {
  if (c_lo < 1 || c_hi < c_lo) throw std::invalid_argument("sweep_clusters: bad cluster range");
  Eigen::MatrixXd feats = features(ds);
  const std::vector<int> truth = ds.labels();

  SweepReport report;
  double best_sil = -std::numeric_limits<double>::infinity();
  for (int c = c_lo; c <= c_hi; ++c) {
    ClusterResult km = kmeans(feats, c, derive_seed(cfg_.seed, {0x5EE9, (std::uint64_t)c}));
    SweepRow row;
    row.num_clusters = c;
    row.purity_score = purity(km.assignments, truth);
    row.silhouette_score =
        c >= 2 ? silhouette(feats, km.assignments) : std::numeric_limits<double>::quiet_NaN();
    if (c >= 2 && row.silhouette_score > best_sil) {
      best_sil = row.silhouette_score;
      report.best_num_clusters = c;
    }
    report.rows.push_back(row);
  }
  return report;
}

void Pipeline::save_stage(int stage) const {
  std::filesystem::create_directories(cfg_.out_dir);
  nlohmann::json meta{{"stage", stage},
                      {"num_clusters", cfg_.num_clusters},
                      {"encoder", encoder_to_json(cfg_.encoder)}};
  save_checkpoint(cfg_.out_dir / ("stage" + std::to_string(stage) + ".ckpt"),
                  model_.named_tensors(), meta.dump());
}

bool Pipeline::load_stage(int stage) {
  const auto path = cfg_.out_dir / ("stage" + std::to_string(stage) + ".ckpt");
  if (!std::filesystem::exists(path)) return false;
  auto named = model_.named_tensors();
  load_checkpoint(path, named);
  return true;
}

TransCnn<float> load_model_checkpoint(const std::filesystem::path& path, int* stage,
                                      int* num_clusters) {
  const auto meta = nlohmann::json::parse(read_checkpoint_meta(path));
  EncoderConfig cfg = encoder_from_json(meta.at("encoder"), EncoderConfig{});
  if (stage) *stage = meta.value("stage", 0);
  if (num_clusters) *num_clusters = meta.value("num_clusters", cfg.projection_dim);
  TransCnn<float> model(cfg, 0);
  auto named = model.named_tensors();
  load_checkpoint(path, named);
  return model;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  std::ofstream os(path);
  os << "stage,dataset,snr_db,acc,nmi,ari,purity\n";
  for (const auto& r : rows)
    os << r.stage << "," << r.dataset << "," << r.snr_db << "," << r.acc << "," << r.nmi << ","
       << r.ari << "," << r.purity << "\n";
}

void write_confusion_csv(const std::filesystem::path& path, const Pipeline::Report& report) {
  std::ofstream os(path);
  os << "true_class";
  for (int id : report.class_ids) os << ",pred_" << id;
  os << "\n";
  for (Eigen::Index i = 0; i < report.confusion.rows(); ++i) {
    os << report.class_ids[i];
    for (Eigen::Index j = 0; j < report.confusion.cols(); ++j) os << "," << report.confusion(i, j);
    os << "\n";
  }
}

void write_thresholds_csv(const std::filesystem::path& path, const StageStats& stage3) {
  std::ofstream os(path);
  os << "epoch";
  if (!stage3.threshold_rows.empty())
    for (Eigen::Index c = 0; c < stage3.threshold_rows[0].size(); ++c) os << ",tau_" << c;
  os << "\n";
  for (std::size_t e = 0; e < stage3.threshold_rows.size(); ++e) {
    os << e;
    for (Eigen::Index c = 0; c < stage3.threshold_rows[e].size(); ++c)
      os << "," << stage3.threshold_rows[e][c];
    os << "\n";
  }
}

void write_sweep_csv(const std::filesystem::path& path, const Pipeline::SweepReport& report) {
  std::ofstream os(path);
  os << "num_clusters,silhouette,purity\n";
  for (const auto& r : report.rows) {
    os << r.num_clusters << ",";
    if (std::isnan(r.silhouette_score))
      os << "undefined";
    else
      os << r.silhouette_score;
    os << "," << r.purity_score << "\n";
  }
}

}  // namespace pulseclust
