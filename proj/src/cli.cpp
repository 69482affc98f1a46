// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "promptforge/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "promptforge/checkpoint.hpp"
#include "promptforge/config.hpp"
#include "promptforge/error.hpp"
#include "promptforge/eval.hpp"
#include "promptforge/pair_foundry.hpp"
#include "promptforge/parallel.hpp"
#include "promptforge/ppo.hpp"
#include "promptforge/sft.hpp"
#include "promptforge/text.hpp"

namespace promptforge::cli {
namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::size_t threads = 1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Run configuration file (JSON)");
  cmd->add_option("--set", c.sets, "Override a config value, e.g. --set sft.epochs=5")
      ->allow_extra_args(false);
  cmd->add_option("--threads", c.threads, "Maximum worker threads")->check(CLI::PositiveNumber);
}

config::RunConfig load(const Common& c) {
  set_max_threads(c.threads);
  std::optional<fs::path> file;
  if (!c.config.empty()) file = c.config;
  return config::load_run_config(file, c.sets);
}

fs::path pairs_path(const config::RunConfig& cfg) { return cfg.paths.data_dir / "pairs.jsonl"; }
fs::path vocab_path(const config::RunConfig& cfg) { return cfg.paths.data_dir / "vocab.txt"; }
fs::path splits_dir(const config::RunConfig& cfg) { return cfg.paths.data_dir / "splits"; }

template <typename Metric>
void write_metrics(const fs::path& path, const std::vector<Metric>& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  for (const auto& m : log) out << m.to_json().dump() << '\n';
  if (!out) throw Error(ErrorCode::kIoError, "write failed: " + path.string());
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!text::normalize(line).empty()) lines.push_back(line);
  }
  return lines;
}

int run_make_pairs(const config::RunConfig& cfg, const std::string& source, std::ostream& err) {
  std::vector<text::PromptPair> pairs;
  if (source == "synthetic") {
    const auto world = config::load_world(cfg);
    Rng rng = Rng(cfg.seed).fork("pairs");
    pairs = foundry::synth_pairs(world, cfg.pairs.count, rng, cfg.pairs.miss_rate);
  } else {
    if (cfg.pairs.input.empty()) {
      throw Error(ErrorCode::kInvalidConfig, "pairs.input must name a prompt file for --source llm");
    }
    const auto prompts = read_lines(cfg.pairs.input);
    foundry::ChatClient client(cfg.endpoint);
    auto parsed = foundry::make_llm_pairs(client, prompts);
    err << "make-pairs: " << parsed.pairs.size() << " pairs, " << parsed.rejected << " rejected\n";
    pairs = std::move(parsed.pairs);
  }
  fs::create_directories(cfg.paths.data_dir);
  text::write_pairs(pairs_path(cfg), pairs);
  err << "make-pairs: wrote " << pairs.size() << " pairs to " << pairs_path(cfg).string() << '\n';
  return kExitOk;
}

int run_build_vocab(const config::RunConfig& cfg, std::ostream& err) {
  const auto pairs = text::read_pairs(pairs_path(cfg));
  std::vector<std::string> corpus;
  for (const auto& p : pairs) {
    corpus.push_back(p.toxic.raw);
    corpus.push_back(p.clean.raw);
  }
  const auto vocab = text::build_vocab(corpus, cfg.vocab_max_size);
  vocab.save(vocab_path(cfg));
  err << "build-vocab: " << vocab.size() << " tokens\n";
  return kExitOk;
}

int run_split(const config::RunConfig& cfg, std::ostream& err) {
  const auto pairs = text::read_pairs(pairs_path(cfg));
  const auto splits = foundry::split_dataset(pairs, cfg.split, Rng(cfg.seed).fork("split").seed());
  foundry::write_splits(splits_dir(cfg), splits);
  err << "split: sft " << splits.sft.size() << ", ppo " << splits.ppo.size() << ", eval "
      << splits.eval.size() << ", template " << splits.templates.size() << '\n';
  return kExitOk;
}

int run_sft(const config::RunConfig& cfg, const std::string& resume, std::ostream& err) {
  const auto vocab = text::Vocabulary::load(vocab_path(cfg));
  auto splits = foundry::read_splits(splits_dir(cfg));
  text::tokenize_pairs(vocab, splits.sft);
  auto pc = cfg.policy;
  pc.vocab_size = vocab.size();
  pc.adapter_rank = 0;
  pc.validate();
  Rng rng = Rng(cfg.seed).fork("sft");
  Rng init_rng = rng.fork("init");
  const auto init = policy::init_params(pc, init_rng);
  std::optional<sft::SftState> state;
  if (!resume.empty()) state = sft::load_state(resume);
  fs::create_directories(cfg.paths.checkpoint_dir);
  fs::create_directories(cfg.paths.report_dir);
  auto hook = [&](const sft::SftState& s) {
    const auto path = cfg.paths.checkpoint_dir / ("sft-step" + std::to_string(s.step) + ".state");
    sft::save_state(path, vocab, s);
  };
  Rng data_rng = rng.fork("data");
  auto result = sft::train_sft(splits, cfg.sft, init, data_rng, state ? &*state : nullptr, hook);
  write_metrics(cfg.paths.report_dir / "sft_metrics.jsonl", result.log);
  save_checkpoint(cfg.paths.checkpoint_dir / "sft.ckpt", vocab, result.state.params);
  if (!result.log.empty()) {
    err << "sft: " << result.log.size() << " steps, final loss " << result.log.back().loss << '\n';
  }
  return kExitOk;
}

int run_ppo(const config::RunConfig& cfg, const std::string& sft_ckpt, std::ostream& err) {
  const auto ck = load_checkpoint(sft_ckpt.empty() ? cfg.paths.checkpoint_dir / "sft.ckpt" : fs::path(sft_ckpt));
  const auto splits = foundry::read_splits(splits_dir(cfg));
  const auto world = config::load_world(cfg);
  world::ToyWorldBundle bundle(world);
  fs::create_directories(cfg.paths.checkpoint_dir);
  fs::create_directories(cfg.paths.report_dir);
  auto hook = [&](std::size_t step, const policy::PolicyParameters& p) {
    save_checkpoint(cfg.paths.checkpoint_dir / ("ppo-step" + std::to_string(step) + ".ckpt"), ck.vocab, p);
  };
  Rng rng = Rng(cfg.seed).fork("ppo");
  auto result = ppo::train_ppo(ck.params, splits, ck.vocab, bundle, cfg.ppo, rng, hook);
  write_metrics(cfg.paths.report_dir / "ppo_metrics.jsonl", result.log);
  save_checkpoint(cfg.paths.checkpoint_dir / "ppo.ckpt", ck.vocab, result.policy);
  if (!result.log.empty()) {
    err << "ppo: " << result.log.size() << " steps, final mean reward "
        << result.log.back().mean_total_reward << '\n';
  }
  return kExitOk;
}

int run_eval(const config::RunConfig& cfg, const std::string& checkpoint, const std::string& split,
             const std::string& out_path, std::ostream& out) {
  const auto splits = foundry::read_splits(splits_dir(cfg));
  const auto& prompts = split == "template" ? splits.templates : splits.eval;
  const auto world = config::load_world(cfg);
  std::optional<Checkpoint> ck;
  std::optional<eval::Rewriter> rewriter;
  if (!checkpoint.empty()) {
    ck = load_checkpoint(checkpoint);
    rewriter = eval::policy_rewriter(ck->params, ck->vocab, cfg.eval.decode);
  }
  auto report = eval::evaluate(rewriter, prompts, world, cfg.eval);
  if (!checkpoint.empty()) report.checkpoint = fs::path(checkpoint).filename().string();
  fs::path path = out_path;
  if (path.empty()) {
    const std::string name = checkpoint.empty() ? "base" : fs::path(checkpoint).stem().string();
    path = cfg.paths.report_dir / ("eval-" + name + ".json");
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  report.save(path);
  const auto& o = report.overall;
  out << "overall ip=" << o.ip << " cs=" << o.cs << " alignment=" << o.alignment
      << " prompts=" << o.n_prompts << " images=" << o.n_images << '\n';
  return kExitOk;
}

int run_rewrite(const std::string& prompt, const std::string& checkpoint, const config::RunConfig& cfg,
                std::ostream& out) {
  const auto ck = load_checkpoint(checkpoint);
  auto rewriter = eval::policy_rewriter(ck.params, ck.vocab, cfg.eval.decode);
  out << rewriter(prompt) << '\n';
  return kExitOk;
}

int run_compare(const std::string& a, const std::string& b, std::ostream& out) {
  const auto cmp = eval::compare(eval::EvalReport::load(a), eval::EvalReport::load(b));
  out << cmp.table();
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Safe prompt rewriting: pair construction, SFT, PPO and evaluation", "promptforge"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  Common common;
  std::string source = "synthetic";
  std::string resume;
  std::string checkpoint;
  std::string split = "eval";
  std::string out_path;
  std::string prompt;
  std::string report_a;
  std::string report_b;
  std::string sft_ckpt;

  auto* vocab_cmd = app.add_subcommand("build-vocab", "Build the vocabulary from the pair file");
  add_common(vocab_cmd, common);

  auto* pairs_cmd = app.add_subcommand("make-pairs", "Construct toxic -> clean pairs");
  add_common(pairs_cmd, common);
  pairs_cmd->add_option("--source", source, "Pair source")
      ->check(CLI::IsMember({"llm", "synthetic"}))
      ->required();

  auto* split_cmd = app.add_subcommand("split", "Split pairs into sft / ppo / eval / template");
  add_common(split_cmd, common);

  auto* sft_cmd = app.add_subcommand("sft", "Supervised fine-tuning on the SFT split");
  add_common(sft_cmd, common);
  sft_cmd->add_option("--resume", resume, "Training state to resume from");

  auto* ppo_cmd = app.add_subcommand("ppo", "Policy optimization against the ToyWorld reward");
  add_common(ppo_cmd, common);
  ppo_cmd->add_option("--sft-checkpoint", sft_ckpt, "Reference checkpoint (default: <checkpoint_dir>/sft.ckpt)");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate prompts, optionally rewritten by a policy");
  add_common(eval_cmd, common);
  eval_cmd->add_option("--checkpoint", checkpoint, "Policy checkpoint used to rewrite prompts");
  eval_cmd->add_option("--split", split, "Prompt split")->check(CLI::IsMember({"eval", "template"}));
  eval_cmd->add_option("--out", out_path, "Report path (default: <report_dir>/eval-<name>.json)");

  auto* rewrite_cmd = app.add_subcommand("rewrite", "Rewrite one prompt with a policy checkpoint");
  add_common(rewrite_cmd, common);
  rewrite_cmd->add_option("--prompt", prompt, "Prompt text")->required();
  rewrite_cmd->add_option("--checkpoint", checkpoint, "Policy checkpoint")->required();

  auto* compare_cmd = app.add_subcommand("compare", "Compare two evaluation reports");
  add_common(compare_cmd, common);
  compare_cmd->add_option("a", report_a, "Baseline report")->required();
  compare_cmd->add_option("b", report_b, "Candidate report")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << "run 'promptforge --help' for usage\n";
    return kExitUsage;
  }

  try {
    if (compare_cmd->parsed()) return run_compare(report_a, report_b, out);
    const auto cfg = load(common);
    if (vocab_cmd->parsed()) return run_build_vocab(cfg, err);
    if (pairs_cmd->parsed()) return run_make_pairs(cfg, source, err);
    if (split_cmd->parsed()) return run_split(cfg, err);
    if (sft_cmd->parsed()) return run_sft(cfg, resume, err);
    if (ppo_cmd->parsed()) return run_ppo(cfg, sft_ckpt, err);
    if (eval_cmd->parsed()) return run_eval(cfg, checkpoint, split, out_path, out);
    if (rewrite_cmd->parsed()) return run_rewrite(prompt, checkpoint, cfg, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace promptforge::cli
