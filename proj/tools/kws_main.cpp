// kws — synthetic-corpus keyword spotting: data generation, training,
// alignment, decoding, evaluation, and the filler-weight sweep.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "kws/pipeline.hpp"

namespace {

// Keeps only the named decode mode in the eval outputs.
void filter_mode(kws::EvalOutputs& out, const std::string& mode) {
  for (size_t i = 0; i < out.metrics.modes.size(); ++i) {
    if (out.metrics.modes[i].name != mode) continue;
    out.metrics.modes = {out.metrics.modes[i]};
    out.timing.modes = {out.timing.modes[i]};
    out.detections_csv = {out.detections_csv[i]};
    return;
  }
  throw kws::FormatError("post mode not available for this system: " + mode);
}

void write_eval_files(const kws::EvalOutputs& out, const std::string& dir,
                      bool with_metrics) {
  std::filesystem::create_directories(dir);
  if (with_metrics) {
    kws::write_text_file(dir + "/metrics.csv", out.metrics.metrics_csv());
    kws::write_text_file(dir + "/roc.csv", out.metrics.roc_csv());
    kws::write_text_file(dir + "/timing.csv", out.timing.timing_csv());
  }
  for (size_t i = 0; i < out.detections_csv.size(); ++i)
    kws::write_text_file(
        dir + "/detections_" + out.metrics.modes[i].name + ".csv",
        out.detections_csv[i]);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"keyword spotting toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> criterion, topology, post;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--seed", seed, "overrides config and synthesis seed");
  app.add_option("--threads", threads, "worker threads");
  app.add_option("--criterion", criterion,
                 "ce | ctc | lf-mmi | lf-bmmi | lf-smbr");
  app.add_option("--topology", topology, "hmm5 | ctc | hmm-pb | hmm-bp | hmm-bpb");
  app.add_option("--post", post, "decode mode: smooth | kwfiller | med");

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  auto* train = app.add_subcommand("train", "train a system on the corpus");
  auto* align = app.add_subcommand("align", "write train-split Viterbi alignments");
  auto* decode = app.add_subcommand("decode", "write test-split detections");
  auto* eval = app.add_subcommand("eval", "decode and write metrics");
  auto* sweep = app.add_subcommand("sweep", "kwfiller filler-weight sweep");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  kws::PipelineConfig cfg;
  try {
    if (!config_path.empty()) cfg = kws::load_config(config_path);
    if (seed) {
      cfg.seed = *seed;
      cfg.synth.seed = *seed;
    }
    if (threads) cfg.threads = *threads;
    if (criterion) cfg.criterion.kind = kws::criterion_from_name(*criterion);
    if (topology) cfg.topology = kws::topo_kind_from_name(*topology);
    if (post && *post != "smooth" && *post != "kwfiller" && *post != "med")
      throw kws::FormatError("unknown post mode: " + *post);
    if (post && *post == "med" && cfg.topology != kws::TopoKind::kCtc)
      throw kws::FormatError("med decoding needs a ctc system");
    if (cfg.criterion.kind == kws::CriterionKind::kCtc &&
        cfg.topology != kws::TopoKind::kCtc)
      throw kws::FormatError("ctc training needs the ctc topology");
    if (cfg.threads < 1) throw kws::FormatError("threads must be >= 1");
  } catch (const kws::KwsError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (gen->parsed()) {
      kws::Corpus c;
      try {
        c = kws::gen_corpus(cfg.synth);
      } catch (const kws::KwsError& e) {
        // gen_corpus failures are synthesis-parameter validation
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
      }
      kws::write_corpus(c, cfg.data_dir);
      std::cout << "wrote " << c.train.size() << "/" << c.dev.size() << "/"
                << c.test.size() << " train/dev/test utterances to "
                << cfg.data_dir << "\n";
    } else if (train->parsed()) {
      kws::Corpus c = kws::load_corpus(cfg.data_dir);
      kws::TrainedSystem sys = kws::train_system(c, cfg);
      kws::save_system(sys, cfg.work_dir);
      std::cout << "trained " << kws::criterion_name(cfg.criterion.kind)
                << " / " << kws::topo_kind_name(cfg.topology) << " system ("
                << sys.skipped_utts << " utterances skipped) into "
                << cfg.work_dir << "\n";
    } else if (align->parsed()) {
      kws::Corpus c = kws::load_corpus(cfg.data_dir);
      kws::TrainedSystem sys = kws::load_system(cfg.work_dir, cfg, c);
      std::vector<kws::Utterance> utts =
          kws::build_utterances(c.train, c, sys.sd, cfg);
      std::string tsv = kws::alignments_tsv(sys.model.net, sys.sd.topology,
                                            std::move(utts), cfg.threads);
      std::filesystem::create_directories(cfg.work_dir);
      kws::write_text_file(cfg.work_dir + "/alignments.tsv", tsv);
      std::cout << "wrote " << cfg.work_dir << "/alignments.tsv\n";
    } else if (decode->parsed() || eval->parsed()) {
      kws::Corpus c = kws::load_corpus(cfg.data_dir);
      kws::TrainedSystem sys = kws::load_system(cfg.work_dir, cfg, c);
      kws::EvalOutputs out = kws::run_eval(c, cfg, sys);
      if (post) filter_mode(out, *post);
      write_eval_files(out, cfg.work_dir, eval->parsed());
      if (eval->parsed())
        std::cout << out.metrics.metrics_csv();
      else
        for (size_t i = 0; i < out.metrics.modes.size(); ++i)
          std::cout << out.metrics.modes[i].name << ": wrote " << cfg.work_dir
                    << "/detections_" << out.metrics.modes[i].name << ".csv\n";
    } else if (sweep->parsed()) {
      kws::Corpus c = kws::load_corpus(cfg.data_dir);
      kws::TrainedSystem sys = kws::load_system(cfg.work_dir, cfg, c);
      std::string csv = kws::run_sweep(c, cfg, sys);
      std::filesystem::create_directories(cfg.work_dir);
      kws::write_text_file(cfg.work_dir + "/sweep.csv", csv);
      std::cout << csv;
    }
  } catch (const kws::KwsError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
