// SPDX-License-Identifier: Apache-2.0
// lexkit: command-line entry point over the library. Each subcommand wraps
// one pipeline stage; every run directory records the resolved configuration
// and its hash next to the artifacts it produced, and a completed run
// directory is never written into again.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lexkit/checkpoint.hpp"
#include "lexkit/corpus.hpp"
#include "lexkit/encoder.hpp"
#include "lexkit/eval.hpp"
#include "lexkit/io.hpp"
#include "lexkit/objectives.hpp"
#include "lexkit/rng.hpp"
#include "lexkit/synth.hpp"
#include "lexkit/tasks.hpp"
#include "lexkit/tokenizer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lexkit;

namespace {

// ---------------------------------------------------------------------------
// Config overlay: flags override config keys; unset flags fall back to the
// config section named after the command (or the whole file when flat).
// ---------------------------------------------------------------------------

json load_config_section(const std::string& config_path, const std::string& command) {
  if (config_path.empty()) return json::object();
  json root;
  try {
    root = json::parse(io::read_file(config_path));
  } catch (const json::exception& e) {
    throw std::runtime_error("config validation failure: " + config_path + ": " + e.what());
  }
  if (!root.is_object())
    throw std::runtime_error("config validation failure: " + config_path +
                             ": top level must be an object");
  if (root.contains(command) && root.at(command).is_object()) return root.at(command);
  return root;
}

/// Registers options and replays config values into the ones the command
/// line left untouched.
struct Binder {
  CLI::App* cmd = nullptr;
  std::vector<std::function<void(const json&)>> appliers;
  std::map<std::string, std::function<bool(const json&)>> present_fn;

  template <class T>
  CLI::Option* opt(const std::string& key, T& var, const std::string& desc) {
    CLI::Option* o = cmd->add_option("--" + key, var, desc);
    bind(o, key, var);
    return o;
  }

  CLI::Option* flag(const std::string& key, bool& var, const std::string& desc) {
    CLI::Option* o = cmd->add_flag("--" + key, var, desc);
    bind(o, key, var);
    return o;
  }

  template <class T>
  void bind(CLI::Option* o, const std::string& key, T& var) {
    appliers.push_back([o, key, &var](const json& sec) {
      if (o->count() > 0) return;
      auto it = sec.find(key);
      if (it == sec.end()) return;
      try {
        var = it->get<T>();
      } catch (const json::exception&) {
        throw std::runtime_error("config validation failure: field '" + key +
                                 "' has the wrong type");
      }
    });
    present_fn[key] = [o, key](const json& sec) { return o->count() > 0 || sec.contains(key); };
  }

  void apply(const json& sec) {
    for (auto& f : appliers) f(sec);
  }

  void require(const json& sec, std::initializer_list<const char*> keys) const {
    for (const char* k : keys)
      if (!present_fn.at(k)(sec))
        throw std::runtime_error(std::string("config validation failure: field '") + k +
                                 "' is required");
  }
};

// ---------------------------------------------------------------------------
// Run-directory plumbing
// ---------------------------------------------------------------------------

std::string config_hash_of(const std::string& command, const json& resolved) {
  const json j{{"command", command}, {"config", resolved}};
  return io::hex64(io::fnv1a(j.dump()));
}

void require_fresh_dir(const std::string& out) {
  if (out.empty()) throw std::runtime_error("config validation failure: field 'out' is required");
  if (fs::exists(fs::path(out) / "manifest.json"))
    throw std::runtime_error("output directory already holds a completed run: " + out);
  fs::create_directories(out);
}

void write_manifest(const std::string& out_dir, const std::string& command, const json& resolved,
                    const std::string& hash, const std::vector<std::string>& artifacts) {
  const json m{{"command", command},
               {"config", resolved},
               {"config_hash", hash},
               {"artifacts", artifacts}};
  io::write_file(out_dir + "/manifest.json", m.dump(2) + "\n");
}

json read_manifest(const std::string& run_dir) {
  const std::string path = run_dir + "/manifest.json";
  if (!fs::exists(path)) throw std::runtime_error("not a completed run directory: " + run_dir);
  return json::parse(io::read_file(path));
}

void make_parent_dirs(const std::string& file_path) {
  const fs::path parent = fs::path(file_path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

// ---------------------------------------------------------------------------
// Shared loading helpers
// ---------------------------------------------------------------------------

std::vector<Snippet> load_snippets(const std::string& corpus_path) {
  std::vector<Snippet> snippets;
  for (const Document& doc : ingest_corpus(corpus_path))
    for (Snippet& s : split_snippets(doc)) snippets.push_back(std::move(s));
  return snippets;
}

void write_corpus_jsonl(const std::string& path, const std::vector<Document>& docs) {
  std::string out;
  for (const Document& d : docs) {
    const json j{{"id", d.id}, {"text", d.text}};
    out += j.dump();
    out += '\n';
  }
  io::write_file(path, out);
}

/// Preset name or JSON file path.
EncoderConfig encoder_from_arg(const std::string& arg) {
  if (fs::exists(arg)) return load_encoder_config(arg);
  return encoder_preset(arg);
}

std::vector<const nn::Parameter*> const_view(const std::vector<nn::Parameter*>& params) {
  return {params.begin(), params.end()};
}

void load_weights(EncoderModel& model, const std::string& ckpt_path) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(ckpt_path);
  auto params = model.parameters();
  nn::load_into_params(ckpt, params);
}

void save_model(const std::string& path, EncoderModel& model,
                const std::map<std::string, std::string>& meta) {
  nn::save_checkpoint(path, const_view(model.parameters()), meta);
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";
}

// ---------------------------------------------------------------------------
// Task building shared by `finetune` and `evaluate` (the latter replays the
// spec recorded in the run manifest so the dataset and split are identical).
// ---------------------------------------------------------------------------

struct TaskSpec {
  std::string task;
  std::string corpus;
  std::string vocab;
  std::string annotations;
  std::string groups_from;  // similarity only: retrieval annotations
  std::int64_t maxlen = 512;
  std::uint64_t data_seed = 0;
  std::int64_t negatives = 10;             // retrieval
  std::int64_t negative_snippets = 20000;  // ner
  double train_frac = 0.8, val_frac = 0.1, test_frac = 0.1;
  std::uint64_t split_seed = 0;
};

json task_spec_to_json(const TaskSpec& t) {
  return json{{"task", t.task},
              {"corpus", t.corpus},
              {"vocab", t.vocab},
              {"annotations", t.annotations},
              {"groups-from", t.groups_from},
              {"maxlen", t.maxlen},
              {"data-seed", t.data_seed},
              {"negatives", t.negatives},
              {"negative-snippets", t.negative_snippets},
              {"train-frac", t.train_frac},
              {"val-frac", t.val_frac},
              {"test-frac", t.test_frac},
              {"split-seed", t.split_seed}};
}

TaskSpec task_spec_from_json(const json& j) {
  TaskSpec t;
  t.task = j.at("task").get<std::string>();
  t.corpus = j.at("corpus").get<std::string>();
  t.vocab = j.at("vocab").get<std::string>();
  t.annotations = j.at("annotations").get<std::string>();
  t.groups_from = j.value("groups-from", std::string());
  t.maxlen = j.at("maxlen").get<std::int64_t>();
  t.data_seed = j.at("data-seed").get<std::uint64_t>();
  t.negatives = j.at("negatives").get<std::int64_t>();
  t.negative_snippets = j.at("negative-snippets").get<std::int64_t>();
  t.train_frac = j.at("train-frac").get<double>();
  t.val_frac = j.at("val-frac").get<double>();
  t.test_frac = j.at("test-frac").get<double>();
  t.split_seed = j.at("split-seed").get<std::uint64_t>();
  return t;
}

struct BuiltTask {
  Vocabulary vocab;
  TaskDataset dataset;
  SplitIndices split;
};

BuiltTask build_task(const TaskSpec& spec, const std::string& dump_dir = "") {
  BuiltTask built;
  built.vocab = load_vocabulary(spec.vocab);
  const std::vector<Document> docs = ingest_corpus(spec.corpus);
  const SnippetIndex index = snippet_index(docs);
  Rng data_rng(spec.data_seed);
  std::vector<std::string> warnings;

  if (spec.task == "retrieval") {
    const auto anns = load_retrieval_annotations(spec.annotations);
    const auto examples =
        build_retrieval_dataset(anns, index, data_rng, spec.negatives, &warnings);
    if (!dump_dir.empty()) save_retrieval_examples(dump_dir + "/examples.jsonl", examples);
    built.dataset = encode_retrieval_dataset(built.vocab, examples, spec.maxlen);
  } else if (spec.task == "ner") {
    const auto anns = load_ner_annotations(spec.annotations);
    const auto examples =
        build_ner_dataset(anns, index, data_rng, spec.negative_snippets, &warnings);
    if (!dump_dir.empty()) save_ner_examples(dump_dir + "/examples.jsonl", examples);
    built.dataset = encode_ner_dataset(built.vocab, examples, spec.maxlen);
  } else if (spec.task == "similarity") {
    if (spec.groups_from.empty())
      throw std::runtime_error(
          "config validation failure: field 'groups-from' is required for similarity "
          "(retrieval annotations that define the answer groups)");
    const auto labels = load_similarity_labels(spec.annotations);
    const auto groups = make_answer_groups(load_retrieval_annotations(spec.groups_from), index);
    std::int64_t excluded = 0;
    const auto examples = build_similarity_dataset(groups, labels, &excluded);
    if (excluded > 0)
      std::cerr << "note: " << excluded << " candidate pairs had no expert label\n";
    if (!dump_dir.empty()) save_similarity_examples(dump_dir + "/examples.jsonl", examples);
    built.dataset = encode_similarity_dataset(built.vocab, examples, spec.maxlen);
  } else if (spec.task == "obligation") {
    const auto labels = load_obligation_labels(spec.annotations);
    ClassBalance balance;
    const auto examples = build_obligation_dataset(labels, index, &balance);
    if (!dump_dir.empty()) save_obligation_examples(dump_dir + "/examples.jsonl", examples);
    std::cerr << "note: obligation positive rate "
              << static_cast<double>(balance.positives) / static_cast<double>(balance.total)
              << " over " << balance.total << " snippets\n";
    built.dataset = encode_obligation_dataset(built.vocab, examples, spec.maxlen);
  } else {
    throw std::runtime_error("config validation failure: field 'task' must be one of "
                             "retrieval|ner|similarity|obligation");
  }
  print_warnings(warnings);

  const SplitSpec split_spec{spec.train_frac, spec.val_frac, spec.test_frac, spec.split_seed};
  if (built.dataset.kind == TaskKind::Retrieval)
    built.split = split_grouped(built.dataset.group_keys(), split_spec);
  else
    built.split = split(static_cast<std::int64_t>(built.dataset.examples.size()), split_spec);
  return built;
}

/// One eval-mode forward pass, used as the timing probe.
void probe_forward(EncoderModel& model, ClassifierHead& head, const TaskDataset& ds,
                   std::int64_t index) {
  if (ds.kind == TaskKind::Ner)
    predict_tags(model, head, ds, {index});
  else
    predict_labels(model, head, ds, {index});
}

double measure_predict_ms(EncoderModel& model, ClassifierHead& head, const TaskDataset& ds,
                          const std::vector<std::int64_t>& test, std::int64_t min_passes) {
  const std::int64_t probe = test.empty() ? 0 : test.front();
  return predict_ms_per_sample([&] { probe_forward(model, head, ds, probe); },
                               static_cast<std::int64_t>(test.size()), min_passes);
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct CorpusStatsCmd {
  std::string corpus, vocab, out;
  Binder bind;

  void run(const json& sec) {
    bind.apply(sec);
    bind.require(sec, {"corpus"});
    const std::vector<Snippet> snippets = load_snippets(corpus);
    CorpusStats stats;
    std::optional<Vocabulary> v;
    if (!vocab.empty()) {
      v = load_vocabulary(vocab);
      stats = sentence_length_report(snippets, *v);
    } else {
      stats = sentence_length_report(snippets);
    }
    stats.num_documents = 0;
    {
      std::map<std::string, bool> seen;
      for (const Snippet& s : snippets) seen[s.doc_id] = true;
      stats.num_documents = static_cast<std::int64_t>(seen.size());
    }
    std::cout << "documents:           " << stats.num_documents << "\n"
              << "snippets:            " << stats.num_snippets << "\n"
              << "mean tokens/snippet: " << stats.mean_tokens_per_snippet << "\n"
              << "token unit:          " << (vocab.empty() ? "words" : "subwords") << "\n";
    if (out.empty()) return;

    const json resolved{{"corpus", corpus}, {"vocab", vocab}};
    const std::string hash = config_hash_of("corpus-stats", resolved);
    require_fresh_dir(out);
    json hist = json::object();
    for (const auto& [bucket, count] : stats.tokens_per_snippet_histogram)
      hist[std::to_string(bucket)] = count;
    const json stats_json{{"num_documents", stats.num_documents},
                          {"num_snippets", stats.num_snippets},
                          {"mean_tokens_per_snippet", stats.mean_tokens_per_snippet},
                          {"token_unit", vocab.empty() ? "words" : "subwords"},
                          {"tokens_per_snippet_histogram", hist},
                          {"config_hash", hash}};
    io::write_file(out + "/stats.json", stats_json.dump(2) + "\n");
    save_frequencies(out + "/word_freq.tsv", word_frequencies(snippets));
    write_manifest(out, "corpus-stats", resolved, hash, {"stats.json", "word_freq.tsv"});
    std::cout << "wrote " << out << "\n";
  }
};

struct SynthGenCmd {
  std::uint64_t seed = 0;
  std::int64_t docs = 20;
  std::string out;
  SynthParams params;
  Binder bind;

  void run(const json& sec) {
    bind.apply(sec);
    bind.require(sec, {"seed", "out"});
    const json resolved{{"seed", seed},
                        {"docs", docs},
                        {"duty-weight", params.duty_weight},
                        {"definition-weight", params.definition_weight},
                        {"entity-weight", params.entity_weight},
                        {"answerable-weight", params.answerable_weight},
                        {"filler-weight", params.filler_weight},
                        {"min-sentences", params.min_sentences},
                        {"max-sentences", params.max_sentences}};
    const std::string hash = config_hash_of("synth-gen", resolved);
    require_fresh_dir(out);

    const SynthCorpus corpus = generate_synthetic_corpus(seed, docs, params);
    write_corpus_jsonl(out + "/corpus.jsonl", corpus.documents);
    save_retrieval_annotations(out + "/retrieval.jsonl", corpus.truth.retrieval);
    save_ner_annotations(out + "/ner.jsonl", corpus.truth.ner);
    save_similarity_labels(out + "/similarity.jsonl", corpus.truth.similarity);
    save_obligation_labels(out + "/obligation.jsonl", corpus.truth.obligation);
    write_manifest(out, "synth-gen", resolved, hash,
                   {"corpus.jsonl", "retrieval.jsonl", "ner.jsonl", "similarity.jsonl",
                    "obligation.jsonl"});
    std::cout << "documents:          " << corpus.documents.size() << "\n"
              << "retrieval questions:" << corpus.truth.retrieval.size() << "\n"
              << "ner annotations:    " << corpus.truth.ner.size() << "\n"
              << "similarity labels:  " << corpus.truth.similarity.size() << "\n"
              << "obligation labels:  " << corpus.truth.obligation.size() << "\n"
              << "wrote " << out << "\n";
  }
};

struct BuildVocabCmd {
  std::string corpus, out, freq_out;
  std::int64_t target_size = 0;
  std::string mode = "unigram";
  Binder bind;

  void run(const json& sec) {
    bind.apply(sec);
    bind.require(sec, {"corpus", "target-size", "out"});
    const json resolved{{"corpus", corpus}, {"target-size", target_size}, {"mode", mode}};
    const std::string hash = config_hash_of("build-vocab", resolved);

    const std::vector<Snippet> snippets = load_snippets(corpus);
    const InduceMode m = mode == "bpe" ? InduceMode::Bpe : InduceMode::Unigram;
    const InducedModel induced = induce_vocabulary(snippets, target_size, m);
    make_parent_dirs(out);
    save_vocabulary(out, induced.vocabulary);
    // The vocabulary file itself stays one-token-per-line byte-exact, so the
    // provenance record lives in a sidecar manifest instead.
    const json m2{{"command", "build-vocab"}, {"config", resolved}, {"config_hash", hash}};
    io::write_file(out + ".manifest.json", m2.dump(2) + "\n");
    if (!freq_out.empty()) {
      make_parent_dirs(freq_out);
      save_frequencies(freq_out, word_frequencies(snippets));
    }
    std::cout << "vocabulary size: " << induced.vocabulary.size() << "\n"
              << "wrote " << out << "\n";
  }
};

struct MergeHybridCmd {
  std::string base, corpus, out;
  std::int64_t k = 0;
  Binder bind;

  void run(const json& sec) {
    bind.apply(sec);
    bind.require(sec, {"base", "corpus", "k", "out"});
    const json resolved{{"base", base}, {"corpus", corpus}, {"k", k}};
    const std::string hash = config_hash_of("merge-hybrid", resolved);

    const Vocabulary base_vocab = load_vocabulary(base);
    const std::vector<Snippet> snippets = load_snippets(corpus);
    std::vector<std::string> warnings;
    const Vocabulary hybrid =
        merge_hybrid(base_vocab, word_frequencies(snippets), k, &warnings);
    print_warnings(warnings);
    make_parent_dirs(out);
    save_vocabulary(out, hybrid);
    const json m{{"command", "merge-hybrid"}, {"config", resolved}, {"config_hash", hash}};
    io::write_file(out + ".manifest.json", m.dump(2) + "\n");
    std::cout << "base size:   " << base_vocab.size() << "\n"
              << "hybrid size: " << hybrid.size() << "\n"
              << "wrote " << out << "\n";
  }
};

struct VocabOverlapCmd {
  std::string a, b, out;
  Binder bind;

  void run(const json& sec) {
    bind.apply(sec);
    bind.require(sec, {"a", "b"});
    const Vocabulary va = load_vocabulary(a), vb = load_vocabulary(b);
    const double overlap = vocab_overlap(va, vb);
    std::cout << "overlap: " << overlap << "\n";
    if (out.empty()) return;
    const json resolved{{"a", a}, {"b", b}};
    const json j{{"a", a},
                 {"b", b},
                 {"overlap", overlap},
                 {"config_hash", config_hash_of("vocab-overlap", resolved)}};
    make_parent_dirs(out);
    io::write_file(out, j.dump(2) + "\n");
  }
};

struct PretrainCmd {
  std::string corpus, vocab, out, encoder = "bert-base", init, base_vocab;
  std::uint64_t seed = 0;
  PretrainConfig pc;
  bool sop = false;
  Binder bind;

  void run(const json& sec) {
    bind.apply(sec);
    bind.require(sec, {"corpus", "vocab", "seed", "out"});
    pc.sop = sop;
    pc.seed = seed;
    const json resolved{{"corpus", corpus},       {"vocab", vocab},
                        {"encoder", encoder},     {"init", init},
                        {"base-vocab", base_vocab}, {"seed", seed},
                        {"epochs", pc.epochs},    {"batch-size", pc.batch_size},
                        {"maxlen", pc.maxlen},    {"lr", pc.lr},
                        {"sop", pc.sop},          {"sop-weight", pc.sop_weight},
                        {"p-select", pc.masking.p_select}, {"p-mask", pc.masking.p_mask},
                        {"p-random", pc.masking.p_random}, {"p-keep", pc.masking.p_keep}};
    const std::string hash = config_hash_of("pretrain", resolved);
    require_fresh_dir(out);

    const Vocabulary v = load_vocabulary(vocab);
    const std::vector<Snippet> snippets = load_snippets(corpus);

    std::optional<EncoderModel> model;
    EncoderConfig cfg;
    if (!init.empty()) {
      EncoderConfig base_cfg = load_encoder_config(init + "/encoder.json");
      if (base_cfg.vocab_size == v.size()) {
        cfg = base_cfg;
        model.emplace(cfg, seed);
        load_weights(*model, init + "/model.ckpt");
        std::cout << "warm start from " << init << "\n";
      } else {
        // A larger vocabulary over a warm-start checkpoint is the hybrid
        // flow: new rows are seeded from the base encoding of each word.
        if (base_vocab.empty())
          throw std::runtime_error(
              "config validation failure: field 'base-vocab' is required when the "
              "vocabulary size differs from the warm-start checkpoint");
        const Vocabulary bv = load_vocabulary(base_vocab);
        EncoderModel base_model(base_cfg, 0);
        load_weights(base_model, init + "/model.ckpt");
        cfg = base_cfg;
        cfg.vocab_size = v.size();
        model.emplace(cfg, seed);
        hybrid_warm_start(*model, base_model, bv, v);
        std::cout << "hybrid warm start from " << init << " (+" << (v.size() - bv.size())
                  << " tokens)\n";
      }
    } else {
      cfg = encoder_from_arg(encoder);
      cfg.vocab_size = v.size();  // the model always matches the vocabulary file
      model.emplace(cfg, seed);
    }

    const LossCurve curve = pretrain(*model, v, snippets, pc);
    save_encoder_config(out + "/encoder.json", cfg);
    save_model(out + "/model.ckpt", *model,
               {{"command", "pretrain"},
                {"config_hash", hash},
                {"seed", std::to_string(seed)}});
    save_loss_curve_csv(out + "/loss_curve.csv", curve);
    save_loss_curve_summary(out + "/loss_summary.json", curve, hash);
    write_manifest(out, "pretrain", resolved, hash,
                   {"encoder.json", "model.ckpt", "loss_curve.csv", "loss_summary.json"});
    std::cout << "parameters:       " << param_count(cfg) << "\n"
              << "epoch mean loss:  ";
    for (double e : curve.epoch_means) std::cout << e << " ";
    std::cout << "\nwrote " << out << "\n";
  }
};

struct DistillCmd {
  std::string corpus, vocab, teacher, out;
  std::uint64_t seed = 0;
  DistillConfig dc;
  Binder bind;

  void run(const json& sec) {
    bind.apply(sec);
    bind.require(sec, {"corpus", "vocab", "teacher", "seed", "out"});
    dc.train.seed = seed;
    const json resolved{{"corpus", corpus},
                        {"vocab", vocab},
                        {"teacher", teacher},
                        {"seed", seed},
                        {"alpha", dc.alpha},
                        {"temperature", dc.temperature},
                        {"epochs", dc.train.epochs},
                        {"batch-size", dc.train.batch_size},
                        {"maxlen", dc.train.maxlen},
                        {"lr", dc.train.lr}};
    const std::string hash = config_hash_of("distill", resolved);
    require_fresh_dir(out);

    const Vocabulary v = load_vocabulary(vocab);
    const std::vector<Snippet> snippets = load_snippets(corpus);
    const EncoderConfig teacher_cfg = load_encoder_config(teacher + "/encoder.json");
    EncoderModel teacher_model(teacher_cfg, 0);
    load_weights(teacher_model, teacher + "/model.ckpt");

    EncoderConfig student_cfg = teacher_cfg;
    student_cfg.layers = teacher_cfg.layers / 2;
    student_cfg.use_segments = false;
    student_cfg.use_pooler = false;
    EncoderModel student(student_cfg, seed);
    init_student_from_teacher(student, teacher_model);

    const LossCurve curve = distill_train(teacher_model, student, v, snippets, dc);
    save_encoder_config(out + "/encoder.json", student_cfg);
    save_model(out + "/model.ckpt", student,
               {{"command", "distill"},
                {"config_hash", hash},
                {"seed", std::to_string(seed)}});
    save_loss_curve_csv(out + "/loss_curve.csv", curve);
    save_loss_curve_summary(out + "/loss_summary.json", curve, hash);
    write_manifest(out, "distill", resolved, hash,
                   {"encoder.json", "model.ckpt", "loss_curve.csv", "loss_summary.json"});
    std::cout << "teacher parameters: " << param_count(teacher_cfg) << "\n"
              << "student parameters: " << param_count(student_cfg) << "\n"
              << "wrote " << out << "\n";
  }
};

struct FinetuneCmd {
  std::string task;
  TaskSpec spec;
  std::string init, encoder, model_tag, out;
  std::uint64_t seed = 0;
  FinetuneConfig fc;
  bool freeze = false, dump_examples = false;
  std::int64_t timing_passes = 20;
  Binder bind;

  void run(const json& sec) {
    bind.apply(sec);
    bind.require(sec, {"corpus", "vocab", "annotations", "seed", "out"});
    spec.task = task;
    fc.freeze_encoder = freeze;
    fc.seed = seed;
    if (model_tag.empty()) model_tag = init.empty() ? "scratch" : "pretrained";

    json resolved = task_spec_to_json(spec);
    resolved["init"] = init;
    resolved["encoder"] = encoder;
    resolved["model-tag"] = model_tag;
    resolved["seed"] = seed;
    resolved["max-epochs"] = fc.max_epochs;
    resolved["batch-size"] = fc.batch_size;
    resolved["lr"] = fc.lr;
    resolved["patience"] = fc.patience;
    resolved["freeze-encoder"] = fc.freeze_encoder;
    const std::string hash = config_hash_of("finetune", resolved);
    require_fresh_dir(out);

    BuiltTask built = build_task(spec, dump_examples ? out : "");

    EncoderConfig cfg;
    if (!init.empty()) {
      cfg = load_encoder_config(init + "/encoder.json");
    } else {
      if (encoder.empty())
        throw std::runtime_error(
            "config validation failure: field 'encoder' is required when no warm-start "
            "'init' run is given");
      cfg = encoder_from_arg(encoder);
      cfg.vocab_size = built.vocab.size();
    }
    if (cfg.vocab_size != built.vocab.size())
      throw std::runtime_error("vocabulary size does not match model config");
    EncoderModel model(cfg, seed);
    if (!init.empty()) load_weights(model, init + "/model.ckpt");

    Rng head_rng(seed + 1);
    ClassifierHead head("head", cfg.hidden, built.dataset.num_classes, head_rng);
    const FinetuneResult result = finetune(model, head, built.dataset, built.split, fc);
    const double f1 = evaluate_f1(model, head, built.dataset, built.split.test);
    const double ms =
        measure_predict_ms(model, head, built.dataset, built.split.test, timing_passes);

    save_encoder_config(out + "/encoder.json", cfg);
    const std::map<std::string, std::string> meta{{"command", "finetune"},
                                                  {"config_hash", hash},
                                                  {"task", task},
                                                  {"seed", std::to_string(seed)}};
    save_model(out + "/model.ckpt", model, meta);
    nn::save_checkpoint(out + "/head.ckpt", {&head.w, &head.b}, meta);

    const json result_json{{"task", task},
                           {"model_tag", model_tag},
                           {"seed", seed},
                           {"f1", f1},
                           {"train_hours_per_epoch", result.train_seconds_per_epoch / 3600.0},
                           {"predict_ms_per_sample", ms},
                           {"best_epoch", result.best_epoch},
                           {"epochs_run", result.epochs_run},
                           {"val_losses", result.val_losses},
                           {"config_hash", hash}};
    io::write_file(out + "/result.json", result_json.dump(2) + "\n");
    std::vector<std::string> artifacts{"encoder.json", "model.ckpt", "head.ckpt", "result.json"};
    if (dump_examples) artifacts.insert(artifacts.begin(), "examples.jsonl");
    write_manifest(out, "finetune", resolved, hash, artifacts);
    std::cout << "examples:    " << built.dataset.examples.size() << " (train "
              << built.split.train.size() << " / val " << built.split.val.size() << " / test "
              << built.split.test.size() << ")\n"
              << "epochs run:  " << result.epochs_run << " (best " << result.best_epoch << ")\n"
              << "test F1:     " << f1 << "\n"
              << "wrote " << out << "\n";
  }
};

struct EvaluateCmd {
  std::string run, out;
  std::int64_t timing_passes = 100;
  Binder bind;

  void run_cmd(const json& sec) {
    bind.apply(sec);
    bind.require(sec, {"run", "out"});
    const json manifest = read_manifest(run);
    if (manifest.at("command").get<std::string>() != "finetune")
      throw std::runtime_error("evaluate expects a finetune run directory, got a '" +
                               manifest.at("command").get<std::string>() + "' run");
    const json& run_cfg = manifest.at("config");
    const TaskSpec spec = task_spec_from_json(run_cfg);
    const json resolved{{"run", run}, {"timing-passes", timing_passes}};
    const std::string hash = config_hash_of("evaluate", resolved);
    require_fresh_dir(out);

    BuiltTask built = build_task(spec);
    const EncoderConfig cfg = load_encoder_config(run + "/encoder.json");
    EncoderModel model(cfg, 0);
    load_weights(model, run + "/model.ckpt");
    Rng head_rng(0);
    ClassifierHead head("head", cfg.hidden, built.dataset.num_classes, head_rng);
    {
      const nn::Checkpoint ckpt = nn::load_checkpoint(run + "/head.ckpt");
      std::vector<nn::Parameter*> params{&head.w, &head.b};
      nn::load_into_params(ckpt, params);
    }

    const double f1 = evaluate_f1(model, head, built.dataset, built.split.test);
    const double ms =
        measure_predict_ms(model, head, built.dataset, built.split.test, timing_passes);
    const json result_json{{"task", spec.task},
                           {"model_tag", run_cfg.at("model-tag")},
                           {"seed", run_cfg.at("seed")},
                           {"f1", f1},
                           {"train_hours_per_epoch",
                            json::parse(io::read_file(run + "/result.json"))
                                .at("train_hours_per_epoch")},
                           {"predict_ms_per_sample", ms},
                           {"config_hash", hash},
                           {"evaluated_run", run}};
    io::write_file(out + "/result.json", result_json.dump(2) + "\n");
    write_manifest(out, "evaluate", resolved, hash, {"result.json"});
    std::cout << "test F1:              " << f1 << "\n"
              << "predict ms/sample:    " << ms << "\n"
              << "wrote " << out << "\n";
  }
};

struct RankCmd {
  std::string run, question, doc, corpus, vocab, out;
  std::int64_t k = 3;
  Binder bind;

  void run_cmd(const json& sec) {
    bind.apply(sec);
    bind.require(sec, {"run", "question"});
    const json manifest = read_manifest(run);
    const json& run_cfg = manifest.at("config");
    if (manifest.at("command").get<std::string>() != "finetune" ||
        run_cfg.at("task").get<std::string>() != "retrieval")
      throw std::runtime_error("rank expects a retrieval finetune run directory");
    const std::string corpus_path = corpus.empty() ? run_cfg.at("corpus").get<std::string>()
                                                   : corpus;
    const std::string vocab_path = vocab.empty() ? run_cfg.at("vocab").get<std::string>()
                                                 : vocab;
    const std::int64_t maxlen = run_cfg.at("maxlen").get<std::int64_t>();

    const Vocabulary v = load_vocabulary(vocab_path);
    const std::vector<Document> docs = ingest_corpus(corpus_path);
    const SnippetIndex index = snippet_index(docs);
    std::vector<Snippet> pool;
    if (!doc.empty()) {
      auto it = index.find(doc);
      if (it == index.end()) throw std::runtime_error("unknown document id '" + doc + "'");
      pool = it->second;
    } else {
      for (const auto& [id, snippets] : index)
        pool.insert(pool.end(), snippets.begin(), snippets.end());
    }

    const EncoderConfig cfg = load_encoder_config(run + "/encoder.json");
    EncoderModel model(cfg, 0);
    load_weights(model, run + "/model.ckpt");
    Rng head_rng(0);
    ClassifierHead head("head", cfg.hidden, 2, head_rng);
    {
      const nn::Checkpoint ckpt = nn::load_checkpoint(run + "/head.ckpt");
      std::vector<nn::Parameter*> params{&head.w, &head.b};
      nn::load_into_params(ckpt, params);
    }

    std::vector<std::string> warnings;
    const auto ranked = rank_snippets(model, head, v, question, pool, k, maxlen, &warnings);
    print_warnings(warnings);
    json rows = json::array();
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      const RankedSnippet& r = ranked[i];
      std::cout << (i + 1) << ". [" << r.snippet.doc_id << ":" << r.snippet.index
                << "] score=" << r.score << "  " << r.snippet.text << "\n";
      rows.push_back(json{{"doc_id", r.snippet.doc_id},
                          {"index", r.snippet.index},
                          {"score", r.score},
                          {"text", r.snippet.text}});
    }
    if (!out.empty()) {
      make_parent_dirs(out);
      io::write_file(out, json{{"question", question}, {"ranked", rows}}.dump(2) + "\n");
    }
  }
};

struct ReportCmd {
  std::vector<std::string> runs;
  std::string out;
  Binder bind;

  void run(const json& sec) {
    bind.apply(sec);
    bind.require(sec, {"runs", "out"});
    std::vector<RunResult> results;
    for (const std::string& dir : runs) {
      const std::string path = dir + "/result.json";
      if (!fs::exists(path))
        throw std::runtime_error("run directory has no result.json: " + dir);
      const json j = json::parse(io::read_file(path));
      RunResult r;
      r.task = j.at("task").get<std::string>();
      r.model_tag = j.at("model_tag").get<std::string>();
      r.seed = j.at("seed").get<std::uint64_t>();
      r.f1 = j.at("f1").get<double>();
      r.train_hours_per_epoch = j.at("train_hours_per_epoch").get<double>();
      r.predict_ms_per_sample = j.at("predict_ms_per_sample").get<double>();
      results.push_back(std::move(r));
    }
    const json resolved{{"runs", runs}};
    const std::string hash = config_hash_of("report", resolved);
    require_fresh_dir(out);

    const Report report = aggregate(results);
    save_report_csv(out + "/report.csv", report, hash);
    const std::string f1_table = render_f1_table(report);
    const std::string timing_table = render_timing_table(report);
    io::write_file(out + "/f1_table.txt", f1_table);
    io::write_file(out + "/timing_table.txt", timing_table);
    write_manifest(out, "report", resolved, hash,
                   {"report.csv", "f1_table.txt", "timing_table.txt"});
    std::cout << f1_table << "\n" << timing_table << "\nwrote " << out << "\n";
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lexkit: adapt small transformer language models to legal text"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "lexkit 0.1.0");
  std::string config_path;
  app.add_option("--config", config_path,
                 "JSON config file; command-line flags override config keys");

  auto cs = std::make_shared<CorpusStatsCmd>();
  {
    CLI::App* c = app.add_subcommand("corpus-stats", "Snippet and token statistics of a corpus");
    c->fallthrough();
    cs->bind.cmd = c;
    cs->bind.opt("corpus", cs->corpus, "corpus .jsonl file or directory of .txt files");
    cs->bind.opt("vocab", cs->vocab, "vocabulary file: report subword lengths instead of words");
    cs->bind.opt("out", cs->out, "output directory (stats.json, word_freq.tsv)");
    c->callback([cs, &config_path] { cs->run(load_config_section(config_path, "corpus-stats")); });
  }

  auto sg = std::make_shared<SynthGenCmd>();
  {
    CLI::App* c = app.add_subcommand("synth-gen", "Generate a synthetic annotated legal corpus");
    c->fallthrough();
    sg->bind.cmd = c;
    sg->bind.opt("seed", sg->seed, "generator seed (required; no wall-clock defaults)");
    sg->bind.opt("docs", sg->docs, "number of documents");
    sg->bind.opt("out", sg->out, "output directory");
    sg->bind.opt("duty-weight", sg->params.duty_weight, "duty sentence weight");
    sg->bind.opt("definition-weight", sg->params.definition_weight, "definition sentence weight");
    sg->bind.opt("entity-weight", sg->params.entity_weight, "entity sentence weight");
    sg->bind.opt("answerable-weight", sg->params.answerable_weight,
                 "answerable sentence weight");
    sg->bind.opt("filler-weight", sg->params.filler_weight, "filler sentence weight");
    sg->bind.opt("min-sentences", sg->params.min_sentences, "min sentences per document");
    sg->bind.opt("max-sentences", sg->params.max_sentences, "max sentences per document");
    c->callback([sg, &config_path] { sg->run(load_config_section(config_path, "synth-gen")); });
  }

  auto bv = std::make_shared<BuildVocabCmd>();
  {
    CLI::App* c = app.add_subcommand("build-vocab", "Induce a subword vocabulary from a corpus");
    c->fallthrough();
    bv->bind.cmd = c;
    bv->bind.opt("corpus", bv->corpus, "corpus path");
    bv->bind.opt("target-size", bv->target_size, "exact vocabulary size, specials included");
    bv->bind.opt("mode", bv->mode, "induction mode")->check(CLI::IsMember({"unigram", "bpe"}));
    bv->bind.opt("out", bv->out, "output vocabulary file (one token per line)");
    bv->bind.opt("freq-out", bv->freq_out, "also write word frequencies TSV here");
    c->callback([bv, &config_path] { bv->run(load_config_section(config_path, "build-vocab")); });
  }

  auto mh = std::make_shared<MergeHybridCmd>();
  {
    CLI::App* c = app.add_subcommand(
        "merge-hybrid", "Extend a base vocabulary with the K most frequent corpus words");
    c->fallthrough();
    mh->bind.cmd = c;
    mh->bind.opt("base", mh->base, "base vocabulary file");
    mh->bind.opt("corpus", mh->corpus, "corpus supplying word frequencies");
    mh->bind.opt("k", mh->k, "number of words to add");
    mh->bind.opt("out", mh->out, "output vocabulary file");
    c->callback([mh, &config_path] { mh->run(load_config_section(config_path, "merge-hybrid")); });
  }

  auto vo = std::make_shared<VocabOverlapCmd>();
  {
    CLI::App* c = app.add_subcommand("vocab-overlap", "Shared-token ratio of two vocabularies");
    c->fallthrough();
    vo->bind.cmd = c;
    vo->bind.opt("a", vo->a, "first vocabulary file");
    vo->bind.opt("b", vo->b, "second vocabulary file");
    vo->bind.opt("out", vo->out, "optional JSON output file");
    c->callback([vo, &config_path] { vo->run(load_config_section(config_path, "vocab-overlap")); });
  }

  auto pt = std::make_shared<PretrainCmd>();
  {
    CLI::App* c = app.add_subcommand("pretrain", "Masked-language-model pre-training");
    c->fallthrough();
    pt->bind.cmd = c;
    pt->bind.opt("corpus", pt->corpus, "corpus path");
    pt->bind.opt("vocab", pt->vocab, "vocabulary file; the model vocab size follows it");
    pt->bind.opt("encoder", pt->encoder,
                 "encoder preset name or config JSON path (ignored with --init)");
    pt->bind.opt("init", pt->init, "warm-start run directory (pretrain/distill)");
    pt->bind.opt("base-vocab", pt->base_vocab,
                 "base vocabulary of the --init run when --vocab extends it (hybrid warm start)");
    pt->bind.opt("seed", pt->seed, "training seed (required)");
    pt->bind.opt("epochs", pt->pc.epochs, "training epochs");
    pt->bind.opt("batch-size", pt->pc.batch_size, "sequences per optimizer step");
    pt->bind.opt("maxlen", pt->pc.maxlen, "packed sequence length");
    pt->bind.opt("lr", pt->pc.lr, "Adam learning rate");
    pt->bind.flag("sop", pt->sop, "add the sentence-order auxiliary objective");
    pt->bind.opt("sop-weight", pt->pc.sop_weight, "weight of the sentence-order loss");
    pt->bind.opt("p-select", pt->pc.masking.p_select, "masking selection probability");
    pt->bind.opt("p-mask", pt->pc.masking.p_mask, "P([MASK] | selected)");
    pt->bind.opt("p-random", pt->pc.masking.p_random, "P(random id | selected)");
    pt->bind.opt("p-keep", pt->pc.masking.p_keep, "P(unchanged | selected)");
    pt->bind.opt("out", pt->out, "output run directory");
    c->callback([pt, &config_path] { pt->run(load_config_section(config_path, "pretrain")); });
  }

  auto dt = std::make_shared<DistillCmd>();
  {
    CLI::App* c = app.add_subcommand(
        "distill", "Train a half-depth student against a frozen teacher");
    c->fallthrough();
    dt->bind.cmd = c;
    dt->bind.opt("corpus", dt->corpus, "corpus path");
    dt->bind.opt("vocab", dt->vocab, "vocabulary file (must match the teacher's)");
    dt->bind.opt("teacher", dt->teacher, "teacher run directory");
    dt->bind.opt("seed", dt->seed, "training seed (required)");
    dt->bind.opt("alpha", dt->dc.alpha, "soft-target loss weight");
    dt->bind.opt("temperature", dt->dc.temperature, "distillation temperature");
    dt->bind.opt("epochs", dt->dc.train.epochs, "training epochs");
    dt->bind.opt("batch-size", dt->dc.train.batch_size, "sequences per optimizer step");
    dt->bind.opt("maxlen", dt->dc.train.maxlen, "packed sequence length");
    dt->bind.opt("lr", dt->dc.train.lr, "Adam learning rate");
    dt->bind.opt("out", dt->out, "output run directory");
    c->callback([dt, &config_path] { dt->run(load_config_section(config_path, "distill")); });
  }

  auto ft = std::make_shared<FinetuneCmd>();
  {
    CLI::App* c = app.add_subcommand("finetune", "Fine-tune a classifier on one legal task");
    c->fallthrough();
    ft->bind.cmd = c;
    c->add_option("task", ft->task, "task name")
        ->required()
        ->check(CLI::IsMember({"retrieval", "ner", "similarity", "obligation"}));
    ft->bind.opt("corpus", ft->spec.corpus, "corpus path");
    ft->bind.opt("vocab", ft->spec.vocab, "vocabulary file");
    ft->bind.opt("annotations", ft->spec.annotations, "task annotation JSONL");
    ft->bind.opt("groups-from", ft->spec.groups_from,
                 "retrieval annotations defining answer groups (similarity only)");
    ft->bind.opt("maxlen", ft->spec.maxlen, "encoded sequence length");
    ft->bind.opt("data-seed", ft->spec.data_seed, "negative-sampling seed");
    ft->bind.opt("negatives", ft->spec.negatives, "negatives per question (retrieval)");
    ft->bind.opt("negative-snippets", ft->spec.negative_snippets,
                 "all-O snippets to add (ner)");
    ft->bind.opt("train-frac", ft->spec.train_frac, "train split fraction");
    ft->bind.opt("val-frac", ft->spec.val_frac, "validation split fraction");
    ft->bind.opt("test-frac", ft->spec.test_frac, "test split fraction");
    ft->bind.opt("split-seed", ft->spec.split_seed, "split shuffling seed");
    ft->bind.opt("init", ft->init, "warm-start run directory (pretrain/distill)");
    ft->bind.opt("encoder", ft->encoder, "encoder preset or config path (when no --init)");
    ft->bind.opt("model-tag", ft->model_tag,
                 "model label for reports (default: scratch or pretrained)");
    ft->bind.opt("seed", ft->seed, "training seed (required)");
    ft->bind.opt("max-epochs", ft->fc.max_epochs, "epoch cap");
    ft->bind.opt("batch-size", ft->fc.batch_size, "examples per optimizer step");
    ft->bind.opt("lr", ft->fc.lr, "Adam learning rate");
    ft->bind.opt("patience", ft->fc.patience, "early-stopping patience");
    ft->bind.flag("freeze-encoder", ft->freeze, "train the head only");
    ft->bind.flag("dump-examples", ft->dump_examples, "write the decoded dataset as JSONL");
    ft->bind.opt("timing-passes", ft->timing_passes, "min passes for the inline timing probe");
    ft->bind.opt("out", ft->out, "output run directory");
    c->callback([ft, &config_path] { ft->run(load_config_section(config_path, "finetune")); });
  }

  auto ev = std::make_shared<EvaluateCmd>();
  {
    CLI::App* c = app.add_subcommand(
        "evaluate", "Re-measure test F1 and prediction timing of a finetune run");
    c->fallthrough();
    ev->bind.cmd = c;
    ev->bind.opt("run", ev->run, "finetune run directory");
    ev->bind.opt("timing-passes", ev->timing_passes, "min passes for the timing probe");
    ev->bind.opt("out", ev->out, "output directory");
    c->callback([ev, &config_path] { ev->run_cmd(load_config_section(config_path, "evaluate")); });
  }

  auto rk = std::make_shared<RankCmd>();
  {
    CLI::App* c = app.add_subcommand("rank", "Rank snippets by answer probability");
    c->fallthrough();
    rk->bind.cmd = c;
    rk->bind.opt("run", rk->run, "retrieval finetune run directory");
    rk->bind.opt("question", rk->question, "question text");
    rk->bind.opt("doc", rk->doc, "restrict to one document id");
    rk->bind.opt("k", rk->k, "how many snippets to return");
    rk->bind.opt("corpus", rk->corpus, "corpus override (default: the run's corpus)");
    rk->bind.opt("vocab", rk->vocab, "vocabulary override (default: the run's vocabulary)");
    rk->bind.opt("out", rk->out, "optional JSON output file");
    c->callback([rk, &config_path] { rk->run_cmd(load_config_section(config_path, "rank")); });
  }

  auto rp = std::make_shared<ReportCmd>();
  {
    CLI::App* c = app.add_subcommand("report", "Aggregate run results into tables");
    c->fallthrough();
    rp->bind.cmd = c;
    rp->bind.opt("runs", rp->runs, "run directories holding result.json files");
    rp->bind.opt("out", rp->out, "output directory");
    c->callback([rp, &config_path] { rp->run(load_config_section(config_path, "report")); });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
