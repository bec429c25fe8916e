// kipg — batch driver for the knowledge-intensive program pipeline.
//
// Subcommands: ingest, gen, score, build-dpo, infer, eval, loop.
// Exit codes: 0 success, 1 validation failure, 2 backend failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kipg/errors.hpp"
#include "kipg/evaluation.hpp"
#include "kipg/jsonl.hpp"
#include "kipg/knowledge_store.hpp"
#include "kipg/model_gateway.hpp"
#include "kipg/pipeline.hpp"
#include "kipg/preference_builder.hpp"
#include "kipg/program_model.hpp"
#include "kipg/retrieval.hpp"
#include "kipg/run_config.hpp"

namespace fs = std::filesystem;
using kipg::jsonl::Json;

namespace {

struct Cli {
  std::string config_path;
  std::string output_dir;  // optional override
  std::string mode;        // infer
  std::string split;       // infer / score
  std::string traces;      // eval
  bool complexity_csv = false;
  int iteration = 0;  // loop override, 0 = from config
};

kipg::config::RunConfig load_config(const Cli& cli) {
  auto cfg = kipg::config::RunConfig::load(cli.config_path);
  if (!cli.output_dir.empty()) cfg.output_dir = cli.output_dir;
  if (!cli.mode.empty()) {
    auto mode = kipg::pipeline::retrieval_mode_from_name(cli.mode);
    if (!mode) throw kipg::Error(kipg::ErrorCode::config_invalid, "unknown --mode " + cli.mode);
    cfg.retrieval_mode = *mode;
  }
  if (cli.iteration > 0) cfg.iteration_index = cli.iteration;
  if (!cli.traces.empty()) cfg.traces_path = cli.traces;
  return cfg;
}

fs::path out_path(const kipg::config::RunConfig& cfg, const fs::path& configured,
                  const char* fallback_name) {
  if (!configured.empty()) return cfg.resolve(configured);
  return cfg.resolve(cfg.output_dir) / fallback_name;
}

std::vector<const kipg::store::CalculationInstance*> select_split(
    const kipg::store::InstanceSet& instances, const std::string& split) {
  std::vector<const kipg::store::CalculationInstance*> out;
  for (const auto& inst : instances.instances()) {
    bool keep = false;
    if (split == "all") keep = true;
    else if (split == "train") keep = inst.in_train();
    else if (split == "small_train") keep = inst.in_small_train();
    else if (split == "test") keep = inst.split == kipg::store::Split::test;
    else throw kipg::Error(kipg::ErrorCode::config_invalid, "unknown split \"" + split + "\"");
    if (keep) out.push_back(&inst);
  }
  return out;
}

Json metadata_to_json(const kipg::program::ProgramMetadata& meta) {
  auto params_to_json = [](const std::vector<kipg::program::ParamSpec>& params) {
    Json arr = Json::array();
    for (const auto& p : params) {
      Json j;
      j["name"] = p.name;
      j["type"] = kipg::program::semantic_type_name(p.semantic_type);
      j["unit"] = p.unit;
      j["definition"] = p.definition;
      arr.push_back(std::move(j));
    }
    return arr;
  };
  Json j;
  j["knowledge_source"] = meta.knowledge_source;
  j["inputs"] = params_to_json(meta.inputs);
  j["outputs"] = params_to_json(meta.outputs);
  return j;
}

Json lint_to_json(const kipg::program::LintReport& lint) {
  Json j;
  j["fuzzy_params"] = lint.fuzzy_params;
  Json hits = Json::array();
  for (const auto& hit : lint.hallucination_hits) {
    hits.push_back(Json{{"line", hit.line}, {"keyword", hit.keyword}});
  }
  j["hallucination_hits"] = std::move(hits);
  j["missing_citation_comments"] = lint.missing_citation_comments;
  j["is_clean"] = lint.is_clean();
  return j;
}

void write_gateway_log(const kipg::gateway::Gateway& gateway, const fs::path& path) {
  std::vector<Json> records;
  for (const auto& entry : gateway.trace_log()) {
    Json j;
    j["role"] = kipg::gateway::model_role_name(entry.role);
    j["backend"] = entry.backend;
    j["sample_index"] = entry.sample_index;
    j["prompt_chars"] = entry.prompt_chars;
    j["reply_chars"] = entry.reply_chars;
    j["prompt_tokens"] = entry.prompt_tokens ? Json(*entry.prompt_tokens) : Json(nullptr);
    j["completion_tokens"] =
        entry.completion_tokens ? Json(*entry.completion_tokens) : Json(nullptr);
    j["latency_seconds"] = entry.latency.count();
    records.push_back(std::move(j));
  }
  kipg::jsonl::write_all(path, records);
}

// Candidate as persisted in programs.jsonl.
struct StoredCandidate {
  std::string id;
  std::string document_id;
  std::string source_text;
};

std::map<std::string, std::vector<StoredCandidate>> load_candidates(const fs::path& path) {
  std::map<std::string, std::vector<StoredCandidate>> by_document;
  kipg::jsonl::for_each_record(path, [&](std::size_t, const Json& record) {
    StoredCandidate c;
    c.id = record.value("id", "");
    c.document_id = record.value("document_id", "");
    c.source_text = record.value("source_text", "");
    if (!c.id.empty() && !c.document_id.empty()) {
      by_document[c.document_id].push_back(std::move(c));
    }
  });
  return by_document;
}

// ---------------------------------------------------------------------------

int cmd_ingest(const kipg::config::RunConfig& cfg) {
  auto collection = kipg::store::load_documents(cfg.resolve(cfg.documents_path));
  auto instances =
      kipg::store::load_instances(cfg.resolve(cfg.instances_path), collection);

  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;  // type -> (docs, insts)
  for (const auto& doc : collection.documents()) ++counts[doc.case_type].first;
  for (const auto& inst : instances.instances()) ++counts[inst.case_type].second;

  std::printf("%-24s %10s %10s\n", "case_type", "documents", "instances");
  for (const auto& [case_type, c] : counts) {
    std::printf("%-24s %10zu %10zu\n", case_type.c_str(), c.first, c.second);
  }
  std::printf("%-24s %10zu %10zu\n", "total", collection.size(), instances.size());

  std::size_t n_train = 0, n_small = 0, n_test = 0;
  for (const auto& inst : instances.instances()) {
    if (inst.split == kipg::store::Split::test) ++n_test;
    else if (inst.split == kipg::store::Split::small_train) ++n_small;
    else ++n_train;
  }
  std::printf("splits: train=%zu small_train=%zu test=%zu\n", n_train, n_small, n_test);
  return 0;
}

int cmd_gen(const kipg::config::RunConfig& cfg) {
  auto collection = kipg::store::load_documents(cfg.resolve(cfg.documents_path));
  auto gateway = cfg.build_gateway();

  std::vector<Json> records;
  for (const auto& document : collection.documents()) {
    auto candidates = gateway->generate_programs(document, cfg.sampling);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const std::string id = document.id + "#c" + std::to_string(i);
      Json record;
      record["id"] = id;
      record["document_id"] = document.id;
      record["source_text"] = candidates[i].source_text;

      kipg::program::MetadataIssue issue;
      auto meta = kipg::program::try_parse_metadata(candidates[i].source_text, &issue);
      if (meta) {
        auto program = kipg::program::KnowledgeIntensiveProgram::from_source(
            id, document.id, candidates[i].source_text);
        record["metadata"] = metadata_to_json(program.metadata);
        record["metadata_error"] = nullptr;
        record["logic_line_count"] = program.logic_line_count;
        record["lint"] = lint_to_json(kipg::program::lint_program(program, cfg.lint));
      } else {
        record["metadata"] = nullptr;
        record["metadata_error"] =
            Json{{"code", kipg::program::metadata_error_code_name(issue.code)},
                 {"line", issue.line},
                 {"message", issue.message}};
        record["logic_line_count"] =
            kipg::program::count_logic_lines(candidates[i].source_text);
        record["lint"] = nullptr;
      }
      record["truncated"] = candidates[i].truncated;
      records.push_back(std::move(record));
    }
  }

  const auto path = out_path(cfg, cfg.programs_path, "programs.jsonl");
  kipg::jsonl::write_all(path, records);
  write_gateway_log(*gateway, cfg.resolve(cfg.output_dir) / "gateway_log.jsonl");
  std::printf("wrote %zu candidate programs to %s\n", records.size(), path.c_str());
  return 0;
}

int cmd_score(const kipg::config::RunConfig& cfg, const std::string& split_override) {
  auto collection = kipg::store::load_documents(cfg.resolve(cfg.documents_path));
  auto instances =
      kipg::store::load_instances(cfg.resolve(cfg.instances_path), collection);
  auto by_document = load_candidates(out_path(cfg, cfg.programs_path, "programs.jsonl"));
  auto gateway = cfg.build_gateway();

  const std::string split = split_override.empty() ? cfg.scoring_split : split_override;

  Json documents_json = Json::object();
  for (const auto& document : collection.documents()) {
    auto it = by_document.find(document.id);
    if (it == by_document.end()) continue;

    auto doc_instances = instances.for_document(document.id);
    std::erase_if(doc_instances, [&](const kipg::store::CalculationInstance* inst) {
      if (split == "all") return false;
      if (split == "train") return !inst->in_train();
      if (split == "small_train") return !inst->in_small_train();
      return inst->split != kipg::store::Split::test;
    });
    std::vector<const kipg::store::CalculationInstance*> small_instances;
    for (const auto* inst : doc_instances) {
      if (inst->in_small_train()) small_instances.push_back(inst);
    }

    struct Parsed {
      const StoredCandidate* candidate;
      std::optional<kipg::program::KnowledgeIntensiveProgram> program;
      kipg::program::LintReport lint;
    };
    std::vector<Parsed> parsed;
    for (const auto& candidate : it->second) {
      Parsed p{&candidate, std::nullopt, {}};
      if (auto meta = kipg::program::try_parse_metadata(candidate.source_text)) {
        p.program = kipg::program::KnowledgeIntensiveProgram::from_source(
            candidate.id, candidate.document_id, candidate.source_text);
        p.lint = kipg::program::lint_program(*p.program, cfg.lint);
      }
      parsed.push_back(std::move(p));
    }

    auto score_on = [&](const Parsed& p,
                        const std::vector<const kipg::store::CalculationInstance*>& insts) {
      if (!p.program.has_value()) {
        kipg::pref::ProgramScore s;
        s.program_id = p.candidate->id;
        s.logic_line_count = kipg::program::count_logic_lines(p.candidate->source_text);
        s.n_instances = insts.size();
        s.negative_reasons.push_back(kipg::pref::NegativeReason::fuzzy_params);
        return s;
      }
      return kipg::pref::score_program(*p.program, insts, document, *gateway, cfg.limits,
                                       p.lint, cfg.extraction_retries);
    };

    std::vector<kipg::pref::ProgramScore> final_scores;
    std::vector<std::string> retained;
    if (cfg.use_small_set_filter && !small_instances.empty()) {
      std::vector<kipg::pref::ProgramScore> small_scores;
      for (const auto& p : parsed) small_scores.push_back(score_on(p, small_instances));
      retained = kipg::pref::small_set_filter(small_scores, cfg.small_set_threshold);
      for (std::size_t i = 0; i < parsed.size(); ++i) {
        const bool kept = std::find(retained.begin(), retained.end(), parsed[i].candidate->id) !=
                          retained.end();
        if (kept) {
          final_scores.push_back(score_on(parsed[i], doc_instances));
        } else if (small_scores[i].is_negative()) {
          final_scores.push_back(small_scores[i]);
        }
      }
    } else {
      for (const auto& p : parsed) final_scores.push_back(score_on(p, doc_instances));
    }

    Json doc_json;
    Json scores_json = Json::array();
    for (const auto& s : final_scores) scores_json.push_back(s.to_json());
    doc_json["scores"] = std::move(scores_json);
    doc_json["retained"] = retained;
    auto selected = kipg::pref::select_best_program(final_scores);
    doc_json["selected"] = selected ? Json(*selected) : Json(nullptr);
    documents_json[document.id] = std::move(doc_json);
  }

  Json root;
  root["split"] = split;
  root["iteration_index"] = cfg.iteration_index;
  root["documents"] = std::move(documents_json);

  const auto path = out_path(cfg, cfg.scores_path, "scores.json");
  kipg::jsonl::write_text(path, root.dump(2) + "\n");
  write_gateway_log(*gateway, cfg.resolve(cfg.output_dir) / "gateway_log.jsonl");
  std::printf("wrote scores for %zu documents to %s\n", root["documents"].size(),
              path.c_str());
  return 0;
}

int cmd_build_dpo(const kipg::config::RunConfig& cfg) {
  auto collection = kipg::store::load_documents(cfg.resolve(cfg.documents_path));
  auto by_document = load_candidates(out_path(cfg, cfg.programs_path, "programs.jsonl"));
  auto scores_root = Json::parse(
      kipg::jsonl::read_text(out_path(cfg, cfg.scores_path, "scores.json")), nullptr, false);
  if (scores_root.is_discarded()) {
    throw kipg::ParseError("malformed scores file");
  }
  auto gateway = cfg.build_gateway();

  std::vector<kipg::pref::PreferencePair> all_pairs;
  const auto& documents_json = scores_root.value("documents", Json::object());
  for (const auto& document : collection.documents()) {
    if (!documents_json.contains(document.id)) continue;
    std::vector<kipg::pref::ProgramScore> scores;
    for (const auto& s : documents_json.at(document.id).value("scores", Json::array())) {
      scores.push_back(kipg::pref::ProgramScore::from_json(s));
    }
    if (scores.empty()) continue;
    std::map<std::string, std::string> sources;
    for (const auto& candidate : by_document[document.id]) {
      sources[candidate.id] = candidate.source_text;
    }
    auto pairs = kipg::pref::build_pairs(scores, gateway->render_generation_prompt(document),
                                         sources);
    all_pairs.insert(all_pairs.end(), pairs.begin(), pairs.end());
  }

  const auto dataset_path = cfg.resolve(cfg.output_dir) / "dpo.jsonl";
  auto manifest = kipg::pref::emit_dpo_dataset(all_pairs, dataset_path, cfg.iteration_index,
                                               cfg.manifest_defaults);
  std::printf("wrote %zu preference pairs to %s (manifest beta=%.3g epochs=%d)\n",
              manifest.pair_count, dataset_path.c_str(), manifest.beta, manifest.epochs);
  return 0;
}

int cmd_infer(const kipg::config::RunConfig& cfg, const std::string& split_arg) {
  auto collection = kipg::store::load_documents(cfg.resolve(cfg.documents_path));
  auto instances =
      kipg::store::load_instances(cfg.resolve(cfg.instances_path), collection);

  std::map<std::string, std::string> selected;
  const auto scores_path = out_path(cfg, cfg.scores_path, "scores.json");
  if (fs::exists(scores_path)) {
    auto scores_root =
        Json::parse(kipg::jsonl::read_text(scores_path), nullptr, false);
    if (!scores_root.is_discarded()) {
      const Json docs_json = scores_root.value("documents", Json::object());
      for (const auto& [doc_id, doc_json] : docs_json.items()) {
        if (doc_json.contains("selected") && doc_json.at("selected").is_string()) {
          selected[doc_id] = doc_json.at("selected").get<std::string>();
        }
      }
    }
  }
  auto programs = kipg::pipeline::ProgramStore::from_jsonl(
      out_path(cfg, cfg.programs_path, "programs.jsonl"), selected);

  auto gateway = cfg.build_gateway();

  kipg::pipeline::RetrievalContext context;
  context.k = cfg.retrieval_k;
  context.llm_similarity_threshold = cfg.llm_similarity_threshold;
  std::optional<kipg::retrieval::LexicalIndex> index;
  if (cfg.retrieval_mode == kipg::pipeline::RetrievalMode::lexical) {
    index = kipg::retrieval::LexicalIndex::load_or_build(
        out_path(cfg, cfg.index_path, "index.json"), collection);
    context.index = &*index;
  }

  const std::string split = split_arg.empty() ? "test" : split_arg;
  auto targets = select_split(instances, split);

  std::vector<Json> trace_records;
  std::vector<Json> timing_records;
  std::size_t degraded = 0;
  for (const auto* instance : targets) {
    auto trace = kipg::pipeline::answer_with_retrieval(*instance, collection, programs,
                                                       cfg.retrieval_mode, *gateway,
                                                       cfg.limits, context,
                                                       cfg.extraction_retries);
    if (trace.degraded) ++degraded;
    trace_records.push_back(kipg::pipeline::trace_to_json(trace));
    timing_records.push_back(kipg::pipeline::trace_timings_to_json(trace));
  }

  const auto traces_path = out_path(cfg, cfg.traces_path, "traces.jsonl");
  kipg::jsonl::write_all(traces_path, trace_records);
  kipg::jsonl::write_all(cfg.resolve(cfg.output_dir) / "traces_timings.jsonl",
                         timing_records);
  write_gateway_log(*gateway, cfg.resolve(cfg.output_dir) / "gateway_log.jsonl");
  std::printf("wrote %zu traces to %s (%zu degraded, mode=%s, split=%s)\n",
              trace_records.size(), traces_path.c_str(), degraded,
              kipg::pipeline::retrieval_mode_name(cfg.retrieval_mode), split.c_str());
  return 0;
}

int cmd_eval(const kipg::config::RunConfig& cfg, bool complexity_csv) {
  auto collection = kipg::store::load_documents(cfg.resolve(cfg.documents_path));
  auto instances =
      kipg::store::load_instances(cfg.resolve(cfg.instances_path), collection);

  std::vector<kipg::pipeline::PipelineTrace> traces;
  kipg::jsonl::for_each_record(out_path(cfg, cfg.traces_path, "traces.jsonl"),
                               [&](std::size_t, const Json& record) {
                                 traces.push_back(kipg::pipeline::trace_from_json(record));
                               });

  auto report = kipg::eval::evaluate(traces, instances);
  std::fputs(kipg::eval::render_report_table(report).c_str(), stdout);

  Json root;
  Json per_type = Json::object();
  for (const auto& [case_type, bucket] : report.per_case_type) {
    per_type[case_type] = Json{
        {"n", bucket.n}, {"n_correct", bucket.n_correct}, {"accuracy", bucket.accuracy}};
  }
  root["per_case_type"] = std::move(per_type);
  root["macro_average"] = report.macro_average;
  root["n_total"] = report.n_total;
  root["n_correct_total"] = report.n_correct_total;
  root["n_degraded"] = report.n_degraded;
  root["failures"] = report.failure_instance_ids;

  if (complexity_csv) {
    auto scores_root = Json::parse(
        kipg::jsonl::read_text(out_path(cfg, cfg.scores_path, "scores.json")), nullptr,
        false);
    std::vector<kipg::eval::ScoredProgramSize> sizes;
    if (!scores_root.is_discarded()) {
      const Json docs_json = scores_root.value("documents", Json::object());
      for (const auto& [doc_id, doc_json] : docs_json.items()) {
        for (const auto& s : doc_json.value("scores", Json::array())) {
          auto score = kipg::pref::ProgramScore::from_json(s);
          if (score.is_negative()) continue;
          sizes.push_back({score.logic_line_count, score.score().to_double()});
        }
      }
    }
    auto distribution = kipg::eval::complexity_distribution(sizes);
    kipg::jsonl::write_text(cfg.resolve(cfg.output_dir) / "complexity.csv",
                            kipg::eval::render_complexity_csv(distribution));
    root["complexity_rank_correlation"] =
        distribution.rank_correlation ? Json(*distribution.rank_correlation) : Json(nullptr);
  }

  kipg::jsonl::write_text(cfg.resolve(cfg.output_dir) / "report.json",
                          root.dump(2) + "\n");
  return 0;
}

int cmd_loop(const kipg::config::RunConfig& cfg) {
  auto collection = kipg::store::load_documents(cfg.resolve(cfg.documents_path));
  auto instances =
      kipg::store::load_instances(cfg.resolve(cfg.instances_path), collection);
  auto gateway = cfg.build_gateway();

  kipg::pref::IterationConfig iteration;
  iteration.iteration_index = cfg.iteration_index;
  iteration.sampling = cfg.sampling;
  iteration.limits = cfg.limits;
  iteration.lint = cfg.lint;
  iteration.extraction_retries = cfg.extraction_retries;
  iteration.use_small_set_filter = cfg.use_small_set_filter;
  iteration.small_set_threshold = cfg.small_set_threshold;
  iteration.manifest_defaults = cfg.manifest_defaults;
  iteration.output_dir = cfg.resolve(cfg.output_dir) /
                         ("iteration_" + std::to_string(cfg.iteration_index));

  auto report = kipg::pref::run_iteration(iteration, collection, instances, *gateway);
  write_gateway_log(*gateway, iteration.output_dir / "gateway_log.jsonl");

  for (const auto& doc : report.documents) {
    std::printf("%-12s candidates=%zu pairs=%zu selected=%s score=%s\n",
                doc.document_id.c_str(), doc.candidate_count, doc.pair_count,
                doc.selected_program_id ? doc.selected_program_id->c_str() : "(none)",
                doc.selected_score_text.empty() ? "-" : doc.selected_score_text.c_str());
  }
  std::printf("iteration %d: %zu pairs -> %s\n", report.iteration_index, report.total_pairs,
              report.dataset_path.empty() ? "(no dataset)" : report.dataset_path.c_str());
  std::printf("awaiting externally retrained generator; re-invoke with iteration %d\n",
              report.iteration_index + 1);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"knowledge-intensive program generation pipeline"};
  app.require_subcommand(1);

  Cli cli;
  app.add_option("-c,--config", cli.config_path, "path to the run config JSON")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--output-dir", cli.output_dir, "override paths.output_dir");
  app.fallthrough();

  auto* ingest = app.add_subcommand("ingest", "validate the corpus and report counts");
  auto* gen = app.add_subcommand("gen", "generate candidate programs per document");
  auto* score = app.add_subcommand("score", "score candidate programs");
  score->add_option("--split", cli.split, "instance split to score on");
  auto* build_dpo = app.add_subcommand("build-dpo", "build the preference dataset");
  auto* infer = app.add_subcommand("infer", "answer queries end to end");
  infer->add_option("--mode", cli.mode, "retrieval mode: oracle|lexical|llm");
  infer->add_option("--split", cli.split, "instance split to answer (default test)");
  auto* eval = app.add_subcommand("eval", "evaluate traces against references");
  eval->add_option("--traces", cli.traces, "traces.jsonl to evaluate");
  eval->add_flag("--complexity-csv", cli.complexity_csv,
                 "also emit the line-count/accuracy distribution");
  auto* loop = app.add_subcommand("loop", "run one generate/score/pair iteration");
  loop->add_option("--iteration", cli.iteration, "override iteration_index");

  CLI11_PARSE(app, argc, argv);

  try {
    auto cfg = load_config(cli);
    if (ingest->parsed()) return cmd_ingest(cfg);
    if (gen->parsed()) return cmd_gen(cfg);
    if (score->parsed()) return cmd_score(cfg, cli.split);
    if (build_dpo->parsed()) return cmd_build_dpo(cfg);
    if (infer->parsed()) return cmd_infer(cfg, cli.split);
    if (eval->parsed()) return cmd_eval(cfg, cli.complexity_csv);
    if (loop->parsed()) return cmd_loop(cfg);
  } catch (const kipg::BackendUnavailableError& e) {
    std::cerr << "backend failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
