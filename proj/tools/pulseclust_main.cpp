// pulseclust: synthesize radar pulse datasets, train the three-stage
// clustering pipeline, and evaluate checkpoints.

#include <CLI11.hpp>
#include <iostream>

#include "pulseclust/pipeline.hpp"

using namespace pulseclust;

namespace {

Dataset generate_named(const std::string& which, std::uint64_t seed, double scale) {
  if (which == "1") return generate_dataset1(seed, scale);
  if (which == "2") return generate_dataset2(seed, scale);
  if (which == "toy") return generate_toy(seed, std::max<Eigen::Index>(1, std::llround(200 * scale)));
  throw CLI::ValidationError("--dataset must be 1, 2 or toy");
}

void print_rows(const std::vector<MetricsRow>& rows) {
  for (const auto& r : rows)
    std::cout << "  [" << r.stage << "] " << r.dataset << " snr=" << r.snr_db << "  acc=" << r.acc
              << " nmi=" << r.nmi << " ari=" << r.ari << " purity=" << r.purity << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Radar intra-pulse modulation clustering toolkit"};
  app.require_subcommand(1);

  std::string dataset_id = "toy";
  std::uint64_t seed = 1;
  double scale = 1.0;
  std::string out_dir = "out";
  std::string data_dir;
  std::string data_name;
  std::string config_path;
  std::string checkpoint;
  bool full = false;
  bool use_head = false;
  int clusters = 0;
  int c_lo = 2, c_hi = 8;

  auto* gen = app.add_subcommand("gen", "Generate a dataset (binary frames + JSON manifest)");
  gen->add_option("--dataset", dataset_id, "1, 2 or toy")->required();
  gen->add_option("--seed", seed, "Generation seed");
  gen->add_option("--scale", scale, "Per-class count multiplier");
  gen->add_option("--out", out_dir, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Run the three training stages");
  train->add_option("--data", data_dir, "Directory holding the generated dataset")->required();
  train->add_option("--name", data_name, "Dataset name (defaults to config's dataset_name)");
  train->add_option("--config", config_path, "JSON config overriding the defaults");
  train->add_option("--seed", seed, "Training seed");
  train->add_option("--out", out_dir, "Output directory for checkpoints and reports");
  train->add_flag("--full", full, "Use the full 12-class configuration");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--data", data_dir, "Dataset directory")->required();
  eval->add_option("--name", data_name, "Dataset name")->required();
  eval->add_option("--clusters", clusters, "Cluster count (default from checkpoint)");
  eval->add_flag("--head", use_head, "Predict with the projection head instead of k-means");
  eval->add_option("--seed", seed, "Evaluation seed");
  eval->add_option("--out", out_dir, "Output directory");

  auto* sweep = app.add_subcommand("sweep", "Cluster-count sweep with silhouette and purity");
  sweep->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  sweep->add_option("--data", data_dir, "Dataset directory")->required();
  sweep->add_option("--name", data_name, "Dataset name")->required();
  sweep->add_option("--cmin", c_lo, "Smallest cluster count");
  sweep->add_option("--cmax", c_hi, "Largest cluster count");
  sweep->add_option("--seed", seed, "Sweep seed");
  sweep->add_option("--out", out_dir, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      Dataset ds = generate_named(dataset_id, seed, scale);
      write_dataset(ds, out_dir);
      std::cout << "wrote " << ds.size() << " samples to " << out_dir << "/"
                << ds.manifest.name << ".iq.bin\n";
      return 0;
    }

    if (train->parsed()) {
      RunConfig cfg = full ? RunConfig::full_default() : RunConfig::desk_default();
      if (!config_path.empty()) cfg = RunConfig::from_json_file(config_path, cfg);
      cfg.data_dir = data_dir;
      if (!data_name.empty()) cfg.dataset_name = data_name;
      if (train->count("--seed")) cfg.seed = seed;
      if (train->count("--out")) cfg.out_dir = out_dir;

      Dataset ds = read_dataset(cfg.data_dir, cfg.dataset_name);
      Pipeline pipe(cfg, std::move(ds));
      std::filesystem::create_directories(cfg.out_dir);
      {
        std::ofstream cfg_out(cfg.out_dir / "run_config.json");
        cfg_out << cfg.to_json() << "\n";
      }

      std::vector<MetricsRow> all_rows;
      auto report_stage = [&](int stage, bool head) {
        auto rep = pipe.evaluate(pipe.dataset(), cfg.num_clusters, head,
                                 "stage" + std::to_string(stage));
        all_rows.insert(all_rows.end(), rep.rows.begin(), rep.rows.end());
        print_rows(rep.rows);
        return rep;
      };

      std::cout << "stage 1: contrastive pretext\n";
      auto s1 = pipe.run_stage1();
      std::cout << "  epochs=" << s1.epochs << " loss=" << s1.final_loss << "\n";
      report_stage(1, false);

      std::cout << "stage 2: pseudo-supervised contrastive\n";
      auto s2 = pipe.run_stage2();
      std::cout << "  epochs=" << s2.epochs << " loss=" << s2.final_loss
                << " skipped_anchors=" << s2.skipped_anchors << "\n";
      report_stage(2, false);

      std::cout << "stage 3: semi-supervised self-labeling\n";
      auto s3 = pipe.run_stage3();
      std::cout << "  epochs=" << s3.epochs << " loss=" << s3.final_loss << "\n";
      auto rep3 = report_stage(3, true);

      write_metrics_csv(cfg.out_dir / "metrics.csv", all_rows);
      write_confusion_csv(cfg.out_dir / "confusion.csv", rep3);
      write_thresholds_csv(cfg.out_dir / "thresholds.csv", s3);
      std::cout << "reports in " << cfg.out_dir << "\n";
      return 0;
    }

    if (eval->parsed() || sweep->parsed()) {
      int ckpt_stage = 0, ckpt_clusters = 0;
      TransCnn<float> model = load_model_checkpoint(checkpoint, &ckpt_stage, &ckpt_clusters);
      RunConfig cfg;
      cfg.encoder = model.config();
      cfg.num_clusters = clusters > 0 ? clusters : ckpt_clusters;
      cfg.seed = seed;
      cfg.out_dir = out_dir;

      Dataset ds = read_dataset(data_dir, data_name);
      Pipeline pipe(cfg, std::move(ds));
      auto named = pipe.model().named_tensors();
      load_checkpoint(checkpoint, named);
      std::filesystem::create_directories(cfg.out_dir);

      if (eval->parsed()) {
        auto rep = pipe.evaluate(pipe.dataset(), cfg.num_clusters, use_head,
                                 "stage" + std::to_string(ckpt_stage));
        print_rows(rep.rows);
        write_metrics_csv(cfg.out_dir / "metrics.csv", rep.rows);
        write_confusion_csv(cfg.out_dir / "confusion.csv", rep);
      } else {
        auto rep = pipe.sweep_clusters(pipe.dataset(), c_lo, c_hi);
        for (const auto& r : rep.rows)
          std::cout << "  C=" << r.num_clusters << " silhouette="
                    << (std::isnan(r.silhouette_score) ? std::string("undefined")
                                                       : std::to_string(r.silhouette_score))
                    << " purity=" << r.purity_score << "\n";
        std::cout << "silhouette argmax: C=" << rep.best_num_clusters << "\n";
        write_sweep_csv(cfg.out_dir / "sweep.csv", rep);
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
