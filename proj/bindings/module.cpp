// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "promptforge/checkpoint.hpp"
#include "promptforge/cli.hpp"
#include "promptforge/error.hpp"
#include "promptforge/eval.hpp"
#include "promptforge/pair_foundry.hpp"
#include "promptforge/parallel.hpp"
#include "promptforge/reward.hpp"
#include "promptforge/text.hpp"
#include "promptforge/toyworld.hpp"

namespace py = pybind11;
using namespace promptforge;

namespace {

py::list pairs_to_list(const std::vector<text::PromptPair>& pairs) {
  py::list out;
  for (const auto& p : pairs) {
    py::dict d;
    d["toxic"] = p.toxic.raw;
    d["clean"] = p.clean.raw;
    d["provenance"] = std::string(text::to_string(p.provenance));
    d["category"] = p.category ? py::cast(*p.category) : py::none();
    out.append(std::move(d));
  }
  return out;
}

reward::RewardConfig reward_config(double beta, const std::string& form) {
  reward::RewardConfig c;
  c.beta = beta;
  c.penalty_form = reward::penalty_form_from_string(form);
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "promptforge native core";

  PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error_type;
  error_type.call_once_and_store_result(
      [&] { return py::object(py::exception<Error>(m, "PromptForgeError", PyExc_RuntimeError)); });
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const auto& type = error_type.get_stored();
      py::object exc = type(e.what());
      exc.attr("code") = to_string(e.code());
      PyErr_SetObject(type.ptr(), exc.ptr());
    }
  });

  m.def(
      "run",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::dispatch(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one CLI invocation; returns (exit_code, stdout, stderr).");

  m.def("set_threads", &set_max_threads, py::arg("n"));

  m.def("tokenize", &text::tokenize, py::arg("text"));
  m.def("normalize", &text::normalize, py::arg("text"));

  m.def(
      "parse_pairs",
      [](const std::string& raw) {
        const auto r = foundry::parse_pairs(raw);
        return py::make_tuple(pairs_to_list(r.pairs), r.rejected);
      },
      py::arg("raw"), "Parses a chat response into (pairs, rejected).");

  m.def(
      "render_instruction",
      [](const std::vector<std::string>& prompts) {
        py::list out;
        for (const auto& msg : foundry::render_instruction(prompts)) {
          py::dict d;
          d["role"] = msg.role;
          d["content"] = msg.content;
          out.append(std::move(d));
        }
        return out;
      },
      py::arg("prompts"));

  m.def(
      "synth_pairs",
      [](std::size_t n, std::uint64_t seed, double miss_rate) {
        Rng rng(seed);
        return pairs_to_list(foundry::synth_pairs(world::make_world_v1(), n, rng, miss_rate));
      },
      py::arg("n"), py::arg("seed") = 0, py::arg("miss_rate") = 0.0);

  m.def(
      "toxic_score", [](const std::vector<double>& c) { return reward::toxic_score(c); },
      py::arg("confidences"));
  m.def(
      "alignment_score", [](const std::vector<double>& s) { return reward::alignment_score(s); },
      py::arg("similarities"));
  m.def(
      "policy_penalty",
      [](double lp, double lr, double beta, const std::string& form) {
        return reward::policy_penalty(lp, lr, beta, reward::penalty_form_from_string(form));
      },
      py::arg("logp_policy"), py::arg("logp_reference"), py::arg("beta"), py::arg("form") = "ratio");

  m.def("inappropriate_probability", &eval::inappropriate_probability, py::arg("flags_a"),
        py::arg("flags_b"));
  m.def(
      "confidence_score", [](const std::vector<double>& c) { return eval::confidence_score(c); },
      py::arg("confidences"));

  m.def("world_v1_json", [] { return world::make_world_v1().to_json().dump(); });

  m.def(
      "expected_objective",
      [](const std::vector<std::string>& original, const std::vector<std::string>& rewrite, std::size_t n_mc,
         std::uint64_t seed, double beta, const std::string& form) {
        return world::expected_objective(world::make_world_v1(), original, rewrite, n_mc, Rng(seed),
                                         reward_config(beta, form));
      },
      py::arg("original"), py::arg("rewrite"), py::arg("n_mc") = 200, py::arg("seed") = 0,
      py::arg("beta") = 0.02, py::arg("form") = "ratio");

  m.def(
      "oracle_best_rewrite",
      [](const std::vector<std::string>& words, std::size_t n_mc, std::uint64_t seed) {
        const auto r = world::oracle_best_rewrite(world::make_world_v1(), words, n_mc, Rng(seed));
        return py::make_tuple(r.rewrite, r.expected_objective, r.candidate_objectives);
      },
      py::arg("words"), py::arg("n_mc") = 200, py::arg("seed") = 0);

  m.def(
      "rewrite",
      [](const std::string& prompt, const std::filesystem::path& checkpoint) {
        const auto ck = load_checkpoint(checkpoint);
        return eval::policy_rewriter(ck.params, ck.vocab, eval::EvalConfig::greedy())(prompt);
      },
      py::arg("prompt"), py::arg("checkpoint"), "Greedy rewrite of one prompt.");

  m.def(
      "load_report",
      [](const std::filesystem::path& path) { return eval::EvalReport::load(path).to_json().dump(); },
      py::arg("path"), "Report as a JSON string.");

  m.def(
      "compare",
      [](const std::filesystem::path& a, const std::filesystem::path& b) {
        return eval::compare(eval::EvalReport::load(a), eval::EvalReport::load(b)).to_json().dump();
      },
      py::arg("a"), py::arg("b"), "Per-category deltas as a JSON string.");
}
