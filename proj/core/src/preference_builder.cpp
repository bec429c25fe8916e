#include "kipg/preference_builder.hpp"

#include <algorithm>
#include <cstdio>

namespace kipg::pref {

using jsonl::Json;

const char* negative_reason_name(NegativeReason reason) {
  switch (reason) {
    case NegativeReason::runtime_error: return "runtime_error";
    case NegativeReason::fuzzy_params: return "fuzzy_params";
    case NegativeReason::hallucination_keyword: return "hallucination_keyword";
  }
  return "runtime_error";
}

std::optional<NegativeReason> negative_reason_from_name(std::string_view name) {
  if (name == "runtime_error") return NegativeReason::runtime_error;
  if (name == "fuzzy_params") return NegativeReason::fuzzy_params;
  if (name == "hallucination_keyword") return NegativeReason::hallucination_keyword;
  return std::nullopt;
}

const char* pair_kind_name(PairKind kind) {
  return kind == PairKind::score_ordered ? "score_ordered" : "valid_over_negative";
}

std::string ProgramScore::score_text() const {
  if (is_negative()) return "-1";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", score().to_double());
  return buf;
}

Json ProgramScore::to_json() const {
  Json r;
  r["program_id"] = program_id;
  r["score"] = score_text();
  r["n_instances"] = n_instances;
  r["n_correct"] = n_correct;
  Json reasons = Json::array();
  for (auto reason : negative_reasons) reasons.push_back(negative_reason_name(reason));
  r["negative_reasons"] = std::move(reasons);
  r["logic_line_count"] = logic_line_count;
  return r;
}

ProgramScore ProgramScore::from_json(const Json& record) {
  ProgramScore s;
  s.program_id = record.value("program_id", "");
  s.n_instances = record.value("n_instances", std::size_t{0});
  s.n_correct = record.value("n_correct", std::size_t{0});
  s.logic_line_count = record.value("logic_line_count", 0);
  for (const auto& reason : record.value("negative_reasons", Json::array())) {
    if (auto parsed = negative_reason_from_name(reason.get<std::string>())) {
      s.negative_reasons.push_back(*parsed);
    }
  }
  return s;
}

Json TrainingManifest::to_json() const {
  Json r;
  r["dataset_path"] = dataset_path;
  r["beta"] = beta;
  r["epochs"] = epochs;
  r["learning_rate"] = learning_rate;
  r["adapter_rank"] = adapter_rank;
  r["batch_size"] = batch_size;
  r["iteration_index"] = iteration_index;
  r["pair_count"] = pair_count;
  return r;
}

ProgramScore score_program(const program::KnowledgeIntensiveProgram& program,
                           const std::vector<const store::CalculationInstance*>& instances,
                           const store::KnowledgeDocument& document,
                           gateway::Gateway& gateway, const exec::ExecutionLimits& limits,
                           const program::LintReport& lint, int extraction_retries,
                           std::vector<pipeline::PipelineTrace>* collected_traces) {
  ProgramScore score;
  score.program_id = program.id;
  score.logic_line_count = program.logic_line_count;
  score.n_instances = instances.size();

  if (!lint.fuzzy_params.empty()) {
    score.negative_reasons.push_back(NegativeReason::fuzzy_params);
  }
  if (!lint.hallucination_hits.empty()) {
    score.negative_reasons.push_back(NegativeReason::hallucination_keyword);
  }
  if (score.is_negative()) {
    // Rules 2/3 already disqualify the program; skip the runs.
    return score;
  }

  for (const auto* instance : instances) {
    auto trace =
        pipeline::answer_query(*instance, document, program, gateway, limits,
                               extraction_retries);
    const bool execution_failed =
        trace.execution.has_value() && !trace.execution->ok();
    const bool correct =
        !trace.degraded && trace.extracted_numeric.has_value() &&
        eval::numeric_match(*trace.extracted_numeric, instance->reference_answer);
    if (collected_traces) collected_traces->push_back(std::move(trace));
    if (execution_failed) {
      // Rule 1: any runtime exception / timeout / protocol violation.
      score.negative_reasons.push_back(NegativeReason::runtime_error);
      score.n_correct = 0;
      return score;
    }
    if (correct) ++score.n_correct;
  }
  return score;
}

std::vector<PreferencePair> build_pairs(const std::vector<ProgramScore>& scored,
                                        const std::string& prompt,
                                        const std::map<std::string, std::string>& sources) {
  auto source_of = [&](const std::string& id) -> const std::string& {
    auto it = sources.find(id);
    if (it == sources.end()) {
      throw Error(ErrorCode::config_invalid, "no source text for program \"" + id + "\"");
    }
    return it->second;
  };

  std::vector<PreferencePair> pairs;
  for (const auto& winner : scored) {
    if (winner.is_negative()) continue;
    for (const auto& loser : scored) {
      if (winner.program_id == loser.program_id) continue;
      PairKind kind;
      if (loser.is_negative()) {
        kind = PairKind::valid_over_negative;
      } else if (winner.score() > loser.score()) {
        kind = PairKind::score_ordered;
      } else {
        continue;  // ties and reversed orderings produce nothing
      }
      PreferencePair pair;
      pair.prompt = prompt;
      pair.chosen_id = winner.program_id;
      pair.rejected_id = loser.program_id;
      pair.chosen_source = source_of(winner.program_id);
      pair.rejected_source = source_of(loser.program_id);
      pair.chosen_score = winner.score();
      pair.rejected_score = loser.score();
      pair.kind = kind;
      pairs.push_back(std::move(pair));
    }
  }

  std::sort(pairs.begin(), pairs.end(), [](const PreferencePair& a, const PreferencePair& b) {
    if (a.chosen_id != b.chosen_id) return a.chosen_id < b.chosen_id;
    return a.rejected_id < b.rejected_id;
  });
  return pairs;
}

TrainingManifest emit_dpo_dataset(const std::vector<PreferencePair>& pairs,
                                  const std::filesystem::path& dataset_path,
                                  int iteration_index, const TrainingManifest& defaults) {
  if (pairs.empty()) {
    throw Error(ErrorCode::empty_pair_set, "no preference pairs to emit");
  }
  std::vector<Json> records;
  records.reserve(pairs.size());
  for (const auto& pair : pairs) {
    Json r;
    r["prompt"] = pair.prompt;
    r["chosen"] = pair.chosen_source;
    r["rejected"] = pair.rejected_source;
    records.push_back(std::move(r));
  }
  jsonl::write_all(dataset_path, records);

  TrainingManifest manifest = defaults;
  manifest.dataset_path = dataset_path.filename().string();
  manifest.iteration_index = iteration_index;
  manifest.pair_count = pairs.size();
  jsonl::write_text(dataset_path.parent_path() / "manifest.json",
                    manifest.to_json().dump(2) + "\n");
  return manifest;
}

std::optional<std::string> select_best_program(const std::vector<ProgramScore>& scored) {
  const ProgramScore* best = nullptr;
  for (const auto& candidate : scored) {
    if (candidate.is_negative()) continue;
    if (best == nullptr) {
      best = &candidate;
      continue;
    }
    if (candidate.score() > best->score()) {
      best = &candidate;
    } else if (candidate.score() == best->score()) {
      if (candidate.logic_line_count < best->logic_line_count ||
          (candidate.logic_line_count == best->logic_line_count &&
           candidate.program_id < best->program_id)) {
        best = &candidate;
      }
    }
  }
  if (best == nullptr) return std::nullopt;
  return best->program_id;
}

std::vector<std::string> small_set_filter(const std::vector<ProgramScore>& scored_on_small,
                                          double threshold) {
  std::vector<std::string> retained;
  for (const auto& score : scored_on_small) {
    if (score.is_negative()) continue;
    // num/den >= threshold, evaluated without dividing.
    const auto value = score.score();
    if (static_cast<double>(value.num) >= threshold * static_cast<double>(value.den)) {
      retained.push_back(score.program_id);
    }
  }
  return retained;
}

Json IterationReport::to_json() const {
  Json r;
  r["iteration_index"] = iteration_index;
  Json docs = Json::array();
  for (const auto& doc : documents) {
    Json d;
    d["document_id"] = doc.document_id;
    d["case_type"] = doc.case_type;
    d["candidate_count"] = doc.candidate_count;
    Json scores = Json::array();
    for (const auto& s : doc.scores) scores.push_back(s.to_json());
    d["scores"] = std::move(scores);
    d["retained"] = doc.retained;
    d["pair_count"] = doc.pair_count;
    d["selected_program_id"] =
        doc.selected_program_id ? Json(*doc.selected_program_id) : Json(nullptr);
    d["selected_score"] = doc.selected_score_text;
    d["errors"] = doc.errors;
    docs.push_back(std::move(d));
  }
  r["documents"] = std::move(docs);
  Json accuracy = Json::object();
  for (const auto& [case_type, bucket] : accuracy_per_case_type) {
    Json a;
    a["n"] = bucket.n;
    a["n_correct"] = bucket.n_correct;
    a["accuracy"] = bucket.accuracy;
    accuracy[case_type] = std::move(a);
  }
  r["accuracy_per_case_type"] = std::move(accuracy);
  r["total_pairs"] = total_pairs;
  r["dataset_path"] = dataset_path;
  return r;
}

IterationReport run_iteration(const IterationConfig& config,
                              const store::DocumentCollection& collection,
                              const store::InstanceSet& instances,
                              gateway::Gateway& gateway) {
  IterationReport report;
  report.iteration_index = config.iteration_index;

  std::vector<PreferencePair> all_pairs;
  std::map<std::string, std::pair<std::size_t, std::size_t>> tallies;  // type -> (correct, n)

  for (const auto& document : collection.documents()) {
    DocumentIteration doc_report;
    doc_report.document_id = document.id;
    doc_report.case_type = document.case_type;

    auto train_instances = instances.for_document(document.id);
    std::erase_if(train_instances,
                  [](const store::CalculationInstance* i) { return !i->in_train(); });
    std::vector<const store::CalculationInstance*> small_instances;
    for (const auto* inst : train_instances) {
      if (inst->in_small_train()) small_instances.push_back(inst);
    }

    try {
      auto candidates = gateway.generate_programs(document, config.sampling);
      doc_report.candidate_count = candidates.size();
      const std::string prompt = gateway.render_generation_prompt(document);

      std::map<std::string, std::string> sources;
      struct Candidate {
        std::string id;
        std::optional<program::KnowledgeIntensiveProgram> program;
        program::LintReport lint;
      };
      std::vector<Candidate> parsed;
      for (std::size_t i = 0; i < candidates.size(); ++i) {
        Candidate c;
        c.id = document.id + "#it" + std::to_string(config.iteration_index) + "c" +
               std::to_string(i);
        sources[c.id] = candidates[i].source_text;
        program::MetadataIssue issue;
        if (auto meta = program::try_parse_metadata(candidates[i].source_text, &issue)) {
          c.program = program::KnowledgeIntensiveProgram::from_source(
              c.id, document.id, candidates[i].source_text);
          c.lint = program::lint_program(*c.program, config.lint);
        } else {
          doc_report.errors.push_back(c.id + ": " + issue.message);
        }
        parsed.push_back(std::move(c));
      }

      // An unparseable header means the program declares no usable parameter
      // definitions, which is the fuzzy-params rule by another door.
      auto score_on = [&](const Candidate& c,
                          const std::vector<const store::CalculationInstance*>& insts) {
        if (!c.program.has_value()) {
          ProgramScore s;
          s.program_id = c.id;
          s.logic_line_count = program::count_logic_lines(sources[c.id]);
          s.n_instances = insts.size();
          s.negative_reasons.push_back(NegativeReason::fuzzy_params);
          return s;
        }
        return score_program(*c.program, insts, document, gateway, config.limits, c.lint,
                             config.extraction_retries);
      };

      std::vector<ProgramScore> final_scores;
      if (config.use_small_set_filter && !small_instances.empty()) {
        std::vector<ProgramScore> small_scores;
        for (const auto& c : parsed) small_scores.push_back(score_on(c, small_instances));
        doc_report.retained = small_set_filter(small_scores, config.small_set_threshold);
        // Retained programs graduate to full-set scoring; negatives keep
        // their sentinel for pairing; filtered valid programs drop out.
        for (std::size_t i = 0; i < parsed.size(); ++i) {
          const bool kept =
              std::find(doc_report.retained.begin(), doc_report.retained.end(),
                        parsed[i].id) != doc_report.retained.end();
          if (kept) {
            final_scores.push_back(score_on(parsed[i], train_instances));
          } else if (small_scores[i].is_negative()) {
            final_scores.push_back(small_scores[i]);
          }
        }
      } else {
        for (const auto& c : parsed) final_scores.push_back(score_on(c, train_instances));
      }

      doc_report.scores = final_scores;
      auto pairs = build_pairs(final_scores, prompt, sources);
      doc_report.pair_count = pairs.size();
      all_pairs.insert(all_pairs.end(), pairs.begin(), pairs.end());

      doc_report.selected_program_id = select_best_program(final_scores);
      if (doc_report.selected_program_id) {
        for (const auto& s : final_scores) {
          if (s.program_id == *doc_report.selected_program_id) {
            doc_report.selected_score_text = s.score_text();
            auto& tally = tallies[document.case_type];
            tally.first += s.n_correct;
            tally.second += s.n_instances;
            break;
          }
        }
      } else {
        auto& tally = tallies[document.case_type];
        tally.second += train_instances.size();
      }
    } catch (const BackendUnavailableError&) {
      throw;
    } catch (const std::exception& e) {
      doc_report.errors.push_back(e.what());
    }

    report.documents.push_back(std::move(doc_report));
  }

  report.total_pairs = all_pairs.size();
  for (const auto& [case_type, tally] : tallies) {
    eval::CaseTypeAccuracy a;
    a.n_correct = tally.first;
    a.n = tally.second;
    a.accuracy = a.n == 0 ? 0.0 : static_cast<double>(a.n_correct) / a.n;
    report.accuracy_per_case_type[case_type] = a;
  }

  const auto dataset_path = config.output_dir / "dpo.jsonl";
  if (!all_pairs.empty()) {
    auto manifest = emit_dpo_dataset(all_pairs, dataset_path, config.iteration_index,
                                     config.manifest_defaults);
    report.dataset_path = dataset_path.string();
    (void)manifest;
  }

  jsonl::write_text(config.output_dir / "iteration_report.json",
                    report.to_json().dump(2) + "\n");
  return report;
}

std::size_t emit_extraction_sft_dataset(const std::vector<pipeline::PipelineTrace>& traces,
                                        const store::InstanceSet& instances,
                                        const pipeline::ProgramStore& programs,
                                        const gateway::Gateway& gateway,
                                        const std::filesystem::path& path) {
  std::vector<Json> records;
  for (const auto& trace : traces) {
    if (trace.degraded || trace.extraction_failed) continue;
    const auto* instance = instances.find(trace.instance_id);
    if (instance == nullptr) continue;
    const auto* program = programs.find(trace.document_id);
    if (program == nullptr || program->id != trace.program_id) continue;
    if (!trace.extracted_numeric.has_value() ||
        !eval::numeric_match(*trace.extracted_numeric, instance->reference_answer)) {
      continue;  // unverified bindings
    }
    Json r;
    r["prompt"] = gateway.render_extraction_prompt(instance->query, program->metadata);
    r["completion"] = trace.bindings.to_json().dump();
    records.push_back(std::move(r));
  }
  if (records.empty()) {
    throw Error(ErrorCode::empty_trace_set, "no verified traces to emit");
  }
  jsonl::write_all(path, records);
  return records.size();
}

}  // namespace kipg::pref
