// fmctl: generate embedding stores, train, evaluate, verify gradients and
// inspect score matrices.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fm/fm.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw fm::Error(fm::ErrorCode::IoError, "cannot open " + path + " for writing");
  out << text;
  if (!out) throw fm::Error(fm::ErrorCode::IoError, "write failed for " + path);
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_text(path, text);
  }
}

std::set<std::string> option_keys(const CLI::App& app) {
  std::set<std::string> keys;
  for (const CLI::Option* opt : app.get_options()) {
    for (const auto& name : opt->get_lnames()) {
      if (name != "help" && name != "config") keys.insert(name);
    }
  }
  return keys;
}

/// Fills options that were not given on the command line from --config.
void apply_config_file(CLI::App& app, const std::string& path) {
  if (path.empty()) return;
  const fm::RunConfig cfg = fm::load_run_config(path, option_keys(app));
  std::set<std::string> done;
  for (auto it = cfg.entries.rbegin(); it != cfg.entries.rend(); ++it) {
    const auto& [key, value] = *it;
    if (!done.insert(key).second) continue;
    CLI::Option* opt = app.get_option("--" + key);
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  [[nodiscard]] double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

// ---------------------------------------------------------------------------

struct GenArgs {
  fm::SyntheticWorld world;
  std::string split = "train";
  std::string out;
};

int run_gen(const GenArgs& a) {
  const fm::SplitTag tag = a.split == "test" ? fm::SplitTag::Test : fm::SplitTag::Train;
  const fm::EmbeddingStore store = fm::synthetic_generate(a.world, tag);
  fm::store_write(store, a.out);
  std::cout << "wrote " << a.out << ": D=" << store.dim << " T=" << store.num_templates()
            << " K=" << store.num_classes() << " N=" << store.num_images() << " split=" << a.split << "\n";
  return kExitOk;
}

struct TrainArgs {
  fm::TrainConfig cfg;
  std::string store;
  std::string report_out;
  std::string adapter_out;
};

int run_train(const TrainArgs& a) {
  a.cfg.validate();
  Timer timer;
  const fm::EmbeddingStore store = fm::store_read(a.store);
  const fm::FeaturesMatrix fm_all = fm::FeaturesMatrix::from_store(store);
  const fm::ClassVocabulary vocab = fm::split_base_novel(fm::ClassVocabulary(store.class_names), a.cfg.seed);
  const auto& split = *vocab.split();
  fm::FewShotSet shots = fm::sample_few_shot(store, split.base, a.cfg.shots, a.cfg.seed);

  std::cout << "train: store=" << a.store << " " << a.cfg.describe() << "\n";
  std::cout << "train: D=" << fm_all.dim() << " T=" << fm_all.num_templates() << " K=" << fm_all.num_classes()
            << " base=" << split.base.size() << " novel=" << split.novel.size()
            << " samples=" << shots.samples.size() << "\n";
  for (const auto& w : shots.warnings) std::cerr << "warning: " << w << "\n";

  fm::TrainReport report = fm::train(fm_all, split.base, shots.samples, a.cfg);
  report.warnings = shots.warnings;

  const auto& last = report.epochs.back();
  std::cout << "train: final ce=" << fm::format_g17(last.ce) << " cl=" << fm::format_g17(last.cl)
            << " total=" << fm::format_g17(last.total) << " train_acc=" << fm::format_g17(last.train_accuracy)
            << "\n";
  if (!a.report_out.empty()) {
    write_text(a.report_out + ".csv", fm::train_report_csv(report));
    write_text(a.report_out + ".json", fm::train_report_json(report));
  }
  fm::adapter_write(report.final_state, a.adapter_out);
  std::cerr << "train: " << timer.seconds() << " s\n";
  return kExitOk;
}

struct EvalArgs {
  std::string store;
  std::string adapter;
  std::string out;
  std::string json_out;
  std::string dataset = "synthetic";
  std::size_t threads = 1;
};

int run_eval(const EvalArgs& a) {
  const fm::EmbeddingStore store = fm::store_read(a.store);
  const fm::FeaturesMatrix fm_all = fm::FeaturesMatrix::from_store(store);
  const fm::AdapterState adapter = fm::adapter_read(a.adapter);
  if (adapter.visual.dim() != fm_all.dim()) throw fm::Error(fm::ErrorCode::DimensionMismatch, "adapter dimension");

  fm::BaseNovelSplit split;
  split.base = adapter.base_classes;
  std::sort(split.base.begin(), split.base.end());
  for (std::size_t c = 0; c < fm_all.num_classes(); ++c) {
    if (!std::binary_search(split.base.begin(), split.base.end(), c)) split.novel.push_back(c);
  }
  fm::ClassVocabulary vocab(store.class_names);
  vocab.set_split(split);

  std::vector<fm::EvalRow> rows{{a.dataset, fm::evaluate_base_to_novel(adapter, fm_all, store, split, a.threads)}};
  emit(a.out, fm::eval_csv(rows));
  if (!a.json_out.empty()) write_text(a.json_out, fm::eval_json(rows));
  return kExitOk;
}

struct GradcheckArgs {
  std::uint64_t seed = 0;
  std::size_t instances = 100;
  std::vector<double> eps{1e-5};
  double tau = 1.0;
  double gamma = 0.1;
  double tol = 1e-5;
  bool corrupt = false;
};

int run_gradcheck(const GradcheckArgs& a) {
  Timer timer;
  fm::GradcheckLimits lim;
  lim.tau = a.tau;
  lim.gamma = a.gamma;
  bool ok = true;
  for (double eps : a.eps) {
    const fm::GradcheckSummary s = fm::run_gradcheck(a.seed, a.instances, eps, lim, a.corrupt);
    const auto line = [&](const char* name, double err) {
      const bool pass = err <= a.tol;
      ok = ok && pass;
      std::cout << name << " eps=" << fm::format_g17(eps) << " instances=" << s.instances
                << " max_rel_err=" << fm::format_g17(err) << (pass ? " PASS" : " FAIL") << "\n";
    };
    line("contrastive", s.worst.contrastive);
    line("cross_entropy", s.worst.cross_entropy);
    line("total", s.worst.total);
  }
  std::cerr << "gradcheck: " << timer.seconds() << " s\n";
  return ok ? kExitOk : kExitRuntime;
}

struct ScoresArgs {
  std::string store;
  std::string adapter;
  std::size_t sample = 0;
  std::size_t beta = 5;
  bool negatives_per_class = false;
  std::string out;
  std::string selection_out;
};

int run_scores(const ScoresArgs& a) {
  const fm::EmbeddingStore store = fm::store_read(a.store);
  const fm::FeaturesMatrix fm_all = fm::FeaturesMatrix::from_store(store);
  if (a.sample >= store.num_images()) {
    throw fm::Error(fm::ErrorCode::InvalidConfig, "sample index " + std::to_string(a.sample) + " out of range");
  }
  fm::Vec v = store.image_embedding(a.sample);
  if (!a.adapter.empty()) v = fm::adapter_read(a.adapter).visual.apply(v);
  const fm::ScoreMatrix scores = fm::compute_score_matrix(fm_all, fm::l2_normalize(v));
  const fm::UnexpectedSelection sel =
      fm::select_unexpected(scores, store.labels[a.sample], a.beta,
                            a.negatives_per_class ? fm::NegativePool::PerClass : fm::NegativePool::Global);
  emit(a.out, fm::score_matrix_csv(scores, store.class_names));
  emit(a.selection_out, fm::selection_csv(sel, scores));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Features-matrix prompt regularization toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  const auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key = value file; command-line flags take precedence");
  };

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic embedding store");
  add_config(gen_cmd);
  gen_cmd->add_option("--out", gen.out, "Output FMES path");
  gen_cmd->add_option("--seed", gen.world.seed)->capture_default_str();
  gen_cmd->add_option("--classes", gen.world.num_classes)->capture_default_str();
  gen_cmd->add_option("--templates", gen.world.num_templates)->capture_default_str();
  gen_cmd->add_option("--dim", gen.world.dim)->capture_default_str();
  gen_cmd->add_option("--per-class", gen.world.images_per_class, "Images per class")->capture_default_str();
  gen_cmd->add_option("--sigma-template", gen.world.sigma_template)->capture_default_str();
  gen_cmd->add_option("--sigma-image", gen.world.sigma_image)->capture_default_str();
  gen_cmd->add_option("--split", gen.split)->check(CLI::IsMember({"train", "test"}))->capture_default_str();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train adapter and text features on base classes");
  add_config(train_cmd);
  train_cmd->add_option("--store", tr.store, "Training FMES store");
  train_cmd->add_option("--adapter-out", tr.adapter_out, "Output adapter path");
  train_cmd->add_option("--report-out", tr.report_out, "Report prefix (writes PREFIX.csv and PREFIX.json)");
  train_cmd->add_option("--seed", tr.cfg.seed)->capture_default_str();
  train_cmd->add_option("--gamma", tr.cfg.gamma)->capture_default_str();
  train_cmd->add_option("--beta", tr.cfg.beta)->capture_default_str();
  train_cmd->add_option("--tau", tr.cfg.tau)->capture_default_str();
  train_cmd->add_option("--lr", tr.cfg.lr)->capture_default_str();
  train_cmd->add_option("--epochs", tr.cfg.epochs)->capture_default_str();
  train_cmd->add_option("--shots", tr.cfg.shots)->capture_default_str();
  train_cmd->add_option("--batch-size", tr.cfg.batch_size)->capture_default_str();
  train_cmd->add_flag("--negatives-per-class", tr.cfg.negatives_per_class);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Base-to-novel evaluation of a trained adapter");
  add_config(eval_cmd);
  eval_cmd->add_option("--store", ev.store, "Test FMES store");
  eval_cmd->add_option("--adapter", ev.adapter, "Adapter written by train");
  eval_cmd->add_option("--out", ev.out, "CSV output (default stdout)");
  eval_cmd->add_option("--json-out", ev.json_out, "Structured report output");
  eval_cmd->add_option("--dataset", ev.dataset)->capture_default_str();
  eval_cmd->add_option("--threads", ev.threads)->check(CLI::PositiveNumber)->capture_default_str();

  GradcheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference verification of analytic gradients");
  add_config(gc_cmd);
  gc_cmd->add_option("--seed", gc.seed)->capture_default_str();
  gc_cmd->add_option("--instances", gc.instances)->check(CLI::PositiveNumber)->capture_default_str();
  gc_cmd->add_option("--eps", gc.eps, "One or more step sizes")->delimiter(',')->capture_default_str();
  gc_cmd->add_option("--tau", gc.tau)->capture_default_str();
  gc_cmd->add_option("--gamma", gc.gamma)->capture_default_str();
  gc_cmd->add_option("--tol", gc.tol)->capture_default_str();
  gc_cmd->add_flag("--corrupt-gradient", gc.corrupt, "Test hook: perturb analytic gradients");

  ScoresArgs sc;
  auto* sc_cmd = app.add_subcommand("scores", "Dump one sample's score matrix and unexpected selection");
  add_config(sc_cmd);
  sc_cmd->add_option("--store", sc.store, "FMES store");
  sc_cmd->add_option("--adapter", sc.adapter, "Optional adapter applied to the image feature");
  sc_cmd->add_option("--sample", sc.sample)->capture_default_str();
  sc_cmd->add_option("--beta", sc.beta)->capture_default_str();
  sc_cmd->add_flag("--negatives-per-class", sc.negatives_per_class);
  sc_cmd->add_option("--out", sc.out, "Score matrix CSV (default stdout)");
  sc_cmd->add_option("--selection-out", sc.selection_out, "Selection CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    apply_config_file(*sub, config_path);
    const auto require = [&](const std::string& value, const char* flag) {
      if (value.empty()) throw CLI::RequiredError(flag);
    };
    if (sub == gen_cmd) {
      require(gen.out, "--out");
      return run_gen(gen);
    }
    if (sub == train_cmd) {
      require(tr.store, "--store");
      require(tr.adapter_out, "--adapter-out");
      return run_train(tr);
    }
    if (sub == eval_cmd) {
      require(ev.store, "--store");
      require(ev.adapter, "--adapter");
      return run_eval(ev);
    }
    if (sub == gc_cmd) return run_gradcheck(gc);
    if (sub == sc_cmd) {
      require(sc.store, "--store");
      return run_scores(sc);
    }
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << sub->help();
    return kExitUsage;
  } catch (const fm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return fm::is_validation_error(e.code()) ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
