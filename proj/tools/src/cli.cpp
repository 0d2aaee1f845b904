#include "idcm_cli/cli.hpp"

#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "idcm/bench.hpp"
#include "idcm/cascade.hpp"
#include "idcm/checkpoint.hpp"
#include "idcm/config.hpp"
#include "idcm/corpus_io.hpp"
#include "idcm/eval.hpp"
#include "idcm/synthetic.hpp"
#include "idcm/teacher.hpp"
#include "idcm/train.hpp"
#include "idcm/util.hpp"
#include "idcm/windowing.hpp"

#ifndef IDCM_VERSION
#define IDCM_VERSION "unknown"
#endif

namespace idcm::cli {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kSelectors{"ck", "ck_small", "static_first", "static_top_tf", "all"};
const std::vector<std::string> kLosses{"ranknet", "kd_mse", "kd_ce", "kd_ndcg2"};

/// Options every subcommand understands.
struct Common {
    std::string config_path;
    std::vector<std::string> overrides;  // key=value

    void attach(CLI::App* app) {
        app->add_option("--config", config_path, "Config file of `key = value` lines")->check(CLI::ExistingFile);
        app->add_option("--set", overrides, "Override one config key (key=value), repeatable");
    }

    PipelineConfig load() const {
        PipelineConfig cfg;
        if (!config_path.empty()) {
            cfg.load_file(config_path);
        }
        for (const auto& kv : overrides) {
            auto eq = kv.find('=');
            if (eq == std::string::npos) {
                throw ConfigError("--set expects key=value, got '" + kv + "'");
            }
            cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        return cfg;
    }

    void add_inputs(Manifest& m) const {
        if (!config_path.empty()) {
            m.inputs.push_back(describe_file(config_path));
        }
    }
};

std::string join_args(const std::vector<std::string>& args) {
    std::string out;
    for (const auto& a : args) {
        if (!out.empty()) {
            out += ' ';
        }
        out += a;
    }
    return out;
}

Vocabulary collection_vocabulary(std::span<const RawDocument> raw, std::size_t min_count) {
    std::vector<std::string> texts;
    texts.reserve(raw.size());
    for (const auto& d : raw) {
        texts.push_back(d.text);
    }
    return build_vocabulary(texts, min_count);
}

/// Collection, vocabulary and corpus. The vocabulary comes from the checkpoint when one is
/// given, otherwise it is rebuilt deterministically from the collection.
struct Inputs {
    Vocabulary vocab;
    Corpus corpus;
};

Inputs load_inputs(const fs::path& collection, const PipelineConfig& cfg, const Checkpoint* ckpt) {
    auto raw = read_collection(collection);
    Inputs in;
    in.vocab = ckpt != nullptr ? ckpt->vocabulary : collection_vocabulary(raw, cfg.min_count);
    in.corpus = tokenize_collection(raw, in.vocab);
    return in;
}

std::unique_ptr<ExpensiveScorer> make_scorer(const std::string& spec, const Corpus& corpus,
                                             const WindowConfig& window) {
    auto parsed = parse_teacher_spec(spec);
    switch (parsed.kind) {
    case TeacherSpec::Kind::file:
        return std::make_unique<FileTeacher>(
            std::make_shared<TeacherScoreTable>(read_teacher_scores(parsed.argument, window, corpus)));
    case TeacherSpec::Kind::process:
        return std::make_unique<ProcessTeacher>(parsed.argument);
    case TeacherSpec::Kind::synthetic: {
        long long seed = 0;
        parse_int(parsed.argument, seed);
        return std::make_unique<SyntheticTeacher>(static_cast<std::uint64_t>(seed));
    }
    }
    throw Error("unsupported teacher spec");
}

void add_teacher_input(Manifest& m, const std::string& spec) {
    auto parsed = parse_teacher_spec(spec);
    if (parsed.kind == TeacherSpec::Kind::file) {
        m.inputs.push_back(describe_file(parsed.argument));
    }
    m.seeds.emplace_back("teacher", spec);
}

/// W_PS from the checkpoint unless the config set it explicitly.
void adopt_checkpoint_weights(PipelineConfig& cfg, const Checkpoint& ckpt) {
    if (!cfg.assigned.contains("w_ps") && ckpt.w_ps.size() == static_cast<std::size_t>(cfg.cascade.l)) {
        cfg.cascade.w_ps = ckpt.w_ps;
    }
    if (!cfg.assigned.contains("w_ps_bias")) {
        cfg.cascade.w_ps_bias = ckpt.w_ps_bias;
    }
}

// ---------------------------------------------------------------------------
// window

struct WindowCmd {
    Common common;
    std::string collection;
    std::vector<std::string> docs;
    std::string out;

    void attach(CLI::App* app) {
        common.attach(app);
        app->add_option("--collection", collection, "Collection TSV")->required()->check(CLI::ExistingFile);
        app->add_option("--doc", docs, "Only these document ids (repeatable)");
        app->add_option("--out", out, "Window TSV")->required();
    }

    int run(const std::string& command) {
        auto cfg = common.load();
        cfg.validate();
        auto in = load_inputs(collection, cfg, nullptr);
        std::string text = "doc_id\twindow_index\tfirst_real_pos\tlast_real_pos\ttokens\n";
        auto emit = [&](const TokenizedDocument& doc) {
            for (const auto& w : segment(doc, cfg.cascade.window)) {
                text += doc.doc_id + '\t' + std::to_string(w.window_index) + '\t' + std::to_string(w.first_real_pos) +
                        '\t' + std::to_string(w.last_real_pos) + '\t';
                for (std::size_t i = 0; i < w.tokens.size(); ++i) {
                    text += (i == 0 ? "" : ",") + std::to_string(w.tokens[i]);
                }
                text += '\n';
            }
        };
        if (docs.empty()) {
            for (const auto& doc : in.corpus.documents()) {
                emit(doc);
            }
        } else {
            for (const auto& id : docs) {
                emit(in.corpus.at(id));
            }
        }
        atomic_write(out, text);
        Manifest m{command, cfg.snapshot(), {}, {describe_file(collection)}, {describe_file(out)}};
        common.add_inputs(m);
        write_manifest(m);
        return kExitOk;
    }
};

// ---------------------------------------------------------------------------
// teacher-gen

struct TeacherGenCmd {
    Common common;
    std::string collection, queries, run_in, teacher, out;

    void attach(CLI::App* app) {
        common.attach(app);
        app->add_option("--collection", collection, "Collection TSV")->required()->check(CLI::ExistingFile);
        app->add_option("--queries", queries, "Queries TSV")->required()->check(CLI::ExistingFile);
        app->add_option("--run-in", run_in, "Candidate run file")->required()->check(CLI::ExistingFile);
        app->add_option("--teacher", teacher, "proc:CMD or synthetic:SEED")->required();
        app->add_option("--out", out, "Teacher score table TSV")->required();
    }

    int run(const std::string& command) {
        auto cfg = common.load();
        cfg.validate();
        auto in = load_inputs(collection, cfg, nullptr);
        auto qs = read_queries(queries, in.vocab, cfg.max_query_tokens);
        auto cands = read_run_file(run_in, cfg.max_candidates);
        auto scorer = make_scorer(teacher, in.corpus, cfg.cascade.window);
        std::vector<TeacherScoreTable::Key> order;
        auto table = precompute_teacher_table(*scorer, qs, cands, in.corpus, cfg.cascade.window, &order);
        atomic_write(out, format_teacher_scores(table, order));
        Manifest m{command, cfg.snapshot(), {}, {}, {describe_file(out)}};
        m.inputs = {describe_file(collection), describe_file(queries), describe_file(run_in)};
        common.add_inputs(m);
        add_teacher_input(m, teacher);
        write_manifest(m);
        return kExitOk;
    }
};

// ---------------------------------------------------------------------------
// train

struct TrainCmd {
    Common common;
    std::string stage = "distill";
    std::string loss;
    std::string collection, queries, run_in, teacher_table, triples;
    std::string val_queries, val_qrels, val_run, val_teacher;
    std::string ck_model, out_model, log_path;

    void attach(CLI::App* app) {
        common.attach(app);
        app->add_option("--stage", stage, "standalone | aggregate | distill")
            ->check(CLI::IsMember({"standalone", "aggregate", "distill"}));
        app->add_option("--loss", loss, "Training loss")->check(CLI::IsMember(kLosses));
        app->add_option("--collection", collection, "Collection TSV")->required()->check(CLI::ExistingFile);
        app->add_option("--queries", queries, "Training queries TSV")->required()->check(CLI::ExistingFile);
        app->add_option("--run-in", run_in, "Training candidates (distill; default: pairs of the teacher table)")
            ->check(CLI::ExistingFile);
        app->add_option("--teacher-table", teacher_table, "Teacher score table TSV (distill, aggregate)")
            ->check(CLI::ExistingFile);
        app->add_option("--triples", triples, "Training triples TSV (standalone, aggregate)")
            ->check(CLI::ExistingFile);
        app->add_option("--val-queries", val_queries, "Validation queries TSV")->check(CLI::ExistingFile);
        app->add_option("--val-qrels", val_qrels, "Validation qrels")->check(CLI::ExistingFile);
        app->add_option("--val-run", val_run, "Validation candidate run file")->check(CLI::ExistingFile);
        app->add_option("--val-teacher", val_teacher, "Expensive scorer for validation (default: file:<teacher-table>)");
        app->add_option("--ck-model", ck_model, "Starting checkpoint")->check(CLI::ExistingFile);
        app->add_option("--out-model", out_model, "Output checkpoint")->required();
        app->add_option("--log", log_path, "Training log (default: <out-model>.log.jsonl)");
    }

    int run(const std::string& command) {
        auto cfg = common.load();
        if (!loss.empty()) {
            cfg.set("loss", loss);
        } else if (stage == "standalone") {
            cfg.train.loss = LossKind::ranknet;
        }
        cfg.validate();
        if ((stage == "distill" || stage == "aggregate") && teacher_table.empty()) {
            throw ConfigError("--stage " + stage + " needs --teacher-table");
        }
        if ((stage == "standalone" || stage == "aggregate") && triples.empty()) {
            throw ConfigError("--stage " + stage + " needs --triples");
        }
        const bool has_val = !val_queries.empty() || !val_qrels.empty() || !val_run.empty();
        if (has_val && (val_queries.empty() || val_qrels.empty() || val_run.empty())) {
            throw ConfigError("validation needs --val-queries, --val-qrels and --val-run together");
        }

        std::optional<Checkpoint> start;
        if (!ck_model.empty()) {
            start = load_checkpoint(ck_model);
            adopt_checkpoint_weights(cfg, *start);
        }
        auto in = load_inputs(collection, cfg, start ? &*start : nullptr);
        auto qs = read_queries(queries, in.vocab, cfg.max_query_tokens);

        Checkpoint ckpt;
        ckpt.vocabulary = in.vocab;
        if (start) {
            ckpt.model = start->model;
        } else {
            CkConfig ck = cfg.ck;
            ck.dims.vocab_size = in.vocab.size();
            ckpt.model = init_ck<float>(ck, in.vocab.size(), cfg.model_seed);
        }
        ckpt.w_ps = cfg.cascade.w_ps;
        ckpt.w_ps_bias = cfg.cascade.w_ps_bias;

        std::shared_ptr<TeacherScoreTable> table;
        if (!teacher_table.empty()) {
            table = std::make_shared<TeacherScoreTable>(
                read_teacher_scores(teacher_table, cfg.cascade.window, in.corpus));
        }

        std::vector<Query> vq;
        std::vector<CandidateList> vc;
        Qrels vqrels;
        std::unique_ptr<ExpensiveScorer> vscorer;
        std::optional<Validation> validation;
        if (has_val) {
            vq = read_queries(val_queries, in.vocab, cfg.max_query_tokens);
            vc = read_run_file(val_run, cfg.max_candidates);
            vqrels = read_qrels(val_qrels);
            if (!val_teacher.empty()) {
                vscorer = make_scorer(val_teacher, in.corpus, cfg.cascade.window);
            } else if (table) {
                vscorer = std::make_unique<FileTeacher>(table);
            } else {
                throw ConfigError("validation needs --val-teacher or --teacher-table");
            }
            validation = Validation{vq, vc, &vqrels, vscorer.get()};
        }
        const Validation* val = validation ? &*validation : nullptr;

        std::vector<TrainLogRecord> log;
        if (stage == "distill") {
            std::vector<CandidateList> cands;
            if (!run_in.empty()) {
                cands = read_run_file(run_in, cfg.max_candidates);
            } else {
                for (const auto& [key, scores] : table->entries()) {
                    if (cands.empty() || cands.back().query_id != key.first) {
                        cands.push_back(CandidateList{key.first, {}, {}});
                    }
                    cands.back().doc_ids.push_back(key.second);
                }
            }
            auto result = train_ck_distill(ckpt.model, qs, cands, in.corpus, *table, val, cfg);
            ckpt.model = std::move(result.model);
            log = std::move(result.log);
        } else if (stage == "standalone") {
            auto tr = read_triples(triples);
            auto result = train_ck_standalone(ckpt.model, qs, tr, in.corpus, val, cfg);
            ckpt.model = std::move(result.model);
            log = std::move(result.log);
        } else {
            auto tr = read_triples(triples);
            auto result = fit_aggregation(tr, in.corpus, *table, val, cfg);
            ckpt.w_ps = result.w_ps;
            ckpt.w_ps_bias = result.bias;
            cfg.cascade.w_ps = result.w_ps;
            cfg.cascade.w_ps_bias = result.bias;
            log = std::move(result.log);
        }
        ckpt.config_snapshot = cfg.snapshot();

        const fs::path log_out = log_path.empty() ? fs::path(out_model + ".log.jsonl") : fs::path(log_path);
        save_checkpoint(ckpt, out_model);
        atomic_write(log_out, format_train_log(log));

        Manifest m{command, cfg.snapshot(), {}, {}, {describe_file(out_model), describe_file(log_out)}};
        m.seeds = {{"model_seed", std::to_string(cfg.model_seed)}, {"train_seed", std::to_string(cfg.train.seed)}};
        for (const auto& p : {collection, queries, run_in, teacher_table, triples, val_queries, val_qrels, val_run,
                              ck_model}) {
            if (!p.empty()) {
                m.inputs.push_back(describe_file(p));
            }
        }
        common.add_inputs(m);
        write_manifest(m);
        return kExitOk;
    }
};

// ---------------------------------------------------------------------------
// rank

struct RankCmd {
    Common common;
    std::string collection, queries, run_in, run_out, teacher, ck_model, diagnostics, selector;
    std::optional<int> k;
    int workers = 1;
    std::string tag = "idcm";

    void attach(CLI::App* app) {
        common.attach(app);
        app->add_option("--collection", collection, "Collection TSV")->required()->check(CLI::ExistingFile);
        app->add_option("--queries", queries, "Queries TSV")->required()->check(CLI::ExistingFile);
        app->add_option("--run-in", run_in, "Candidate run file")->required()->check(CLI::ExistingFile);
        app->add_option("--run-out", run_out, "Re-ranked run file")->required();
        app->add_option("--teacher", teacher, "file:PATH, proc:CMD or synthetic:SEED")->required();
        app->add_option("--ck-model", ck_model, "CK checkpoint (needed by ck selectors)")->check(CLI::ExistingFile);
        app->add_option("--selector", selector, "Passage selector")->check(CLI::IsMember(kSelectors));
        app->add_option("--k", k, "Windows routed to the expensive scorer")->check(CLI::PositiveNumber);
        app->add_option("--diagnostics", diagnostics, "Per-document selection dump");
        app->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
        app->add_option("--tag", tag, "Run tag");
    }

    int run(const std::string& command) {
        auto cfg = common.load();
        if (!selector.empty()) {
            cfg.set("selector", selector);
        }
        if (k) {
            cfg.set("k", std::to_string(*k));
        }
        std::optional<Checkpoint> ckpt;
        if (!ck_model.empty()) {
            ckpt = load_checkpoint(ck_model);
            adopt_checkpoint_weights(cfg, *ckpt);
        }
        cfg.validate();
        if (cfg.cascade.uses_ck() && !ckpt) {
            throw ConfigError("selector " + std::string(to_string(cfg.cascade.selector)) + " needs --ck-model");
        }
        auto in = load_inputs(collection, cfg, ckpt ? &*ckpt : nullptr);
        auto qs = read_queries(queries, in.vocab, cfg.max_query_tokens);
        auto cands = read_run_file(run_in, cfg.max_candidates);
        auto scorer = make_scorer(teacher, in.corpus, cfg.cascade.window);
        auto ranked = rank_all(qs, cands, in.corpus, cfg.cascade, ckpt ? &ckpt->model : nullptr, *scorer, workers);

        std::vector<QueryRanking> rankings;
        for (const auto& r : ranked) {
            rankings.push_back(r.ranking);
        }
        write_run_file(rankings, tag, run_out);
        Manifest m{command, cfg.snapshot(), {}, {}, {describe_file(run_out)}};
        if (!diagnostics.empty()) {
            atomic_write(diagnostics, format_diagnostics(ranked));
            m.outputs.push_back(describe_file(diagnostics));
        }
        m.inputs = {describe_file(collection), describe_file(queries), describe_file(run_in)};
        if (ckpt) {
            m.inputs.push_back(describe_file(ck_model));
        }
        common.add_inputs(m);
        add_teacher_input(m, teacher);
        write_manifest(m);
        return kExitOk;
    }
};

// ---------------------------------------------------------------------------
// eval / recall / positions

struct EvalCmd {
    std::string run_path, qrels_path, out, format = "text";
    int binarization = kDefaultBinarization;

    void attach(CLI::App* app) {
        app->add_option("--run", run_path, "Run file")->required()->check(CLI::ExistingFile);
        app->add_option("--qrels", qrels_path, "Qrels")->required()->check(CLI::ExistingFile);
        app->add_option("--binarization", binarization, "Relevance threshold for MRR and MAP")
            ->check(CLI::PositiveNumber);
        app->add_option("--format", format, "Console format")->check(CLI::IsMember({"text", "tsv"}));
        app->add_option("--out", out, "Per-query metric TSV");
    }

    int run(const std::string& command, std::ostream& os) {
        auto run = read_run_file(run_path, std::numeric_limits<std::size_t>::max());
        auto qrels = read_qrels(qrels_path);
        auto report = evaluate(rankings_from_run(run), qrels, binarization);
        os << (format == "tsv" ? format_metrics_tsv(report) : format_metrics_text(report));
        if (!out.empty()) {
            atomic_write(out, format_metrics_tsv(report));
            write_manifest(Manifest{command, "", {}, {describe_file(run_path), describe_file(qrels_path)},
                                    {describe_file(out)}});
        }
        return kExitOk;
    }
};

struct RecallCmd {
    std::string student, teacher, qrels_path, out;
    int top = 3;

    void attach(CLI::App* app) {
        app->add_option("--student", student, "Diagnostics of the cascade under test")->required()
            ->check(CLI::ExistingFile);
        app->add_option("--teacher", teacher, "Diagnostics of a selector=all run")->required()
            ->check(CLI::ExistingFile);
        app->add_option("--qrels", qrels_path, "Qrels for the per-grade split")->check(CLI::ExistingFile);
        app->add_option("--top", top, "Teacher top passages")->check(CLI::PositiveNumber);
        app->add_option("--out", out, "Recall TSV");
    }

    int run(const std::string& command, std::ostream& os) {
        auto s = parse_diagnostics(read_file(student), student);
        auto t = teacher_table_from_diagnostics(parse_diagnostics(read_file(teacher), teacher));
        std::optional<Qrels> qrels;
        if (!qrels_path.empty()) {
            qrels = read_qrels(qrels_path);
        }
        auto report = selection_recall_report(s, t, qrels ? &*qrels : nullptr, top);
        const auto text = format_recall_tsv(report);
        os << text;
        if (!out.empty()) {
            atomic_write(out, text);
            Manifest m{command, "", {}, {describe_file(student), describe_file(teacher)}, {describe_file(out)}};
            if (qrels) {
                m.inputs.push_back(describe_file(qrels_path));
            }
            write_manifest(m);
        }
        return kExitOk;
    }
};

struct PositionsCmd {
    Common common;
    std::string diagnostics, out;

    void attach(CLI::App* app) {
        common.attach(app);
        app->add_option("--diagnostics", diagnostics, "Diagnostics dump")->required()->check(CLI::ExistingFile);
        app->add_option("--out", out, "Histogram TSV");
    }

    int run(const std::string& command, std::ostream& os) {
        auto cfg = common.load();
        cfg.validate();
        auto records = parse_diagnostics(read_file(diagnostics), diagnostics);
        auto h = position_histogram(records, cfg.cascade.window.max_windows(), cfg.cascade.l);
        const auto text = format_histogram_tsv(h);
        os << text;
        if (!out.empty()) {
            atomic_write(out, text);
            Manifest m{command, cfg.snapshot(), {}, {describe_file(diagnostics)}, {describe_file(out)}};
            common.add_inputs(m);
            write_manifest(m);
        }
        return kExitOk;
    }
};

// ---------------------------------------------------------------------------
// bench

struct BenchCmd {
    Common common;
    std::string mode = "sim";
    std::string collection, queries, run_in, teacher, ck_model, selector, out;
    std::string cost_model = "ck=1,etm=40,overhead=0";
    std::string grid = "10:10:1000";
    std::optional<int> k;
    int warmup = 3;
    int reps = 5;

    void attach(CLI::App* app) {
        common.attach(app);
        app->add_option("--mode", mode, "wall | sim")->check(CLI::IsMember({"wall", "sim"}));
        app->add_option("--collection", collection, "Collection TSV")->required()->check(CLI::ExistingFile);
        app->add_option("--run-in", run_in, "Candidate run file")->required()->check(CLI::ExistingFile);
        app->add_option("--queries", queries, "Queries TSV (wall)")->check(CLI::ExistingFile);
        app->add_option("--teacher", teacher, "Expensive scorer (wall)");
        app->add_option("--ck-model", ck_model, "CK checkpoint (wall, ck selectors)")->check(CLI::ExistingFile);
        app->add_option("--selector", selector, "Passage selector")->check(CLI::IsMember(kSelectors));
        app->add_option("--k", k, "Windows routed to the expensive scorer")->check(CLI::PositiveNumber);
        app->add_option("--cost-model", cost_model, "ck=..,etm=..,overhead=..");
        app->add_option("--grid", grid, "CDF grid start:step:end in ms");
        app->add_option("--warmup", warmup, "Untimed warm-up passes")->check(CLI::NonNegativeNumber);
        app->add_option("--reps", reps, "Timed repetitions")->check(CLI::PositiveNumber);
        app->add_option("--out", out, "Output TSV (default: stdout only)");
    }

    int run(const std::string& command, std::ostream& os) {
        auto cfg = common.load();
        if (!selector.empty()) {
            cfg.set("selector", selector);
        }
        if (k) {
            cfg.set("k", std::to_string(*k));
        }
        std::optional<Checkpoint> ckpt;
        if (!ck_model.empty()) {
            ckpt = load_checkpoint(ck_model);
            adopt_checkpoint_weights(cfg, *ckpt);
        }
        cfg.validate();
        auto in = load_inputs(collection, cfg, ckpt ? &*ckpt : nullptr);
        auto cands = read_run_file(run_in, cfg.max_candidates);
        Manifest m{command, cfg.snapshot(), {}, {describe_file(collection), describe_file(run_in)}, {}};
        std::string text;
        if (mode == "sim") {
            auto cost = CostModel::parse(cost_model);
            auto sim = simulate_cost(window_counts_for(cands, in.corpus, cfg.cascade.window), cfg.cascade, cost);
            text = format_simulation_tsv(sim);
        } else {
            if (queries.empty() || teacher.empty()) {
                throw ConfigError("--mode wall needs --queries and --teacher");
            }
            if (cfg.cascade.uses_ck() && !ckpt) {
                throw ConfigError("selector " + std::string(to_string(cfg.cascade.selector)) + " needs --ck-model");
            }
            auto qs = read_queries(queries, in.vocab, cfg.max_query_tokens);
            auto scorer = make_scorer(teacher, in.corpus, cfg.cascade.window);
            auto run = measure_latency(qs, cands, in.corpus, cfg.cascade, ckpt ? &ckpt->model : nullptr, *scorer,
                                       warmup, reps);
            auto g = parse_grid(grid);
            text = format_latency_tsv(run, g);
            m.inputs.push_back(describe_file(queries));
            add_teacher_input(m, teacher);
        }
        os << text;
        if (!out.empty()) {
            atomic_write(out, text);
            m.outputs.push_back(describe_file(out));
            common.add_inputs(m);
            write_manifest(m);
        }
        return kExitOk;
    }
};

// ---------------------------------------------------------------------------
// make-toy

struct MakeToyCmd {
    ToyOptions options;
    std::string out_dir;

    void attach(CLI::App* app) {
        app->add_option("--out-dir", out_dir, "Directory for the generated files")->required();
        app->add_option("--seed", options.seed, "Generator seed");
        app->add_option("--queries", options.queries, "Number of queries")->check(CLI::PositiveNumber);
        app->add_option("--candidates", options.candidates_per_query, "Candidates per query")
            ->check(CLI::Range(2, 1000));
        app->add_option("--topic-terms", options.topic_terms, "Topic vocabulary size")->check(CLI::Range(4, 100000));
        app->add_option("--min-windows", options.min_windows, "Fewest windows per document")
            ->check(CLI::PositiveNumber);
        app->add_option("--max-windows", options.max_windows, "Most windows per document")
            ->check(CLI::PositiveNumber);
        app->add_option("--min-hot", options.min_hot_windows, "Fewest planted windows")->check(CLI::PositiveNumber);
        app->add_option("--max-hot", options.max_hot_windows, "Most planted windows")->check(CLI::PositiveNumber);
        app->add_option("--triples", options.triples_per_query, "Triple draws per query")
            ->check(CLI::NonNegativeNumber);
    }

    int run(const std::string& command) {
        auto toy = make_toy_collection(options);
        write_toy_collection(toy, out_dir);
        const fs::path dir(out_dir);
        Manifest m{command, "", {{"toy_seed", std::to_string(options.seed)}}, {}, {}};
        for (const char* name : {"collection.tsv", "queries.tsv", "run.tsv", "qrels.txt", "triples.tsv"}) {
            m.outputs.push_back(describe_file(dir / name));
        }
        write_manifest(m);
        return kExitOk;
    }
};

std::string error_kind(const std::exception& e) {
    if (dynamic_cast<const FormatError*>(&e) != nullptr) {
        return "format";
    }
    if (dynamic_cast<const ConfigError*>(&e) != nullptr) {
        return "config";
    }
    if (dynamic_cast<const Error*>(&e) != nullptr) {
        return "runtime";
    }
    if (dynamic_cast<const std::filesystem::filesystem_error*>(&e) != nullptr) {
        return "io";
    }
    return "internal";
}

std::string one_line(std::string s) {
    for (auto& c : s) {
        if (c == '\n' || c == '\r') {
            c = ' ';
        }
    }
    return s;
}

} // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Intra-document cascade re-ranking", "idcm"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string("idcm ") + IDCM_VERSION);

    WindowCmd window;
    TeacherGenCmd teacher_gen;
    TrainCmd train;
    RankCmd rank;
    EvalCmd eval;
    RecallCmd recall;
    PositionsCmd positions;
    BenchCmd bench;
    MakeToyCmd make_toy;

    auto* c_window = app.add_subcommand("window", "Segment documents into passage windows");
    window.attach(c_window);
    auto* c_teacher = app.add_subcommand("teacher-gen", "Score every window of every candidate with a teacher");
    teacher_gen.attach(c_teacher);
    auto* c_train = app.add_subcommand("train", "Train CK (standalone or distilled) or fit W_PS");
    train.attach(c_train);
    auto* c_rank = app.add_subcommand("rank", "Re-rank candidate lists with the cascade");
    rank.attach(c_rank);
    auto* c_eval = app.add_subcommand("eval", "nDCG@10, MRR@10 and MAP@100 of a run");
    eval.attach(c_eval);
    auto* c_recall = app.add_subcommand("recall", "Selection recall against teacher top passages");
    recall.attach(c_recall);
    auto* c_positions = app.add_subcommand("positions", "Histogram of selected window positions");
    positions.attach(c_positions);
    auto* c_bench = app.add_subcommand("bench", "Latency measurement or cost-model simulation");
    bench.attach(c_bench);
    auto* c_toy = app.add_subcommand("make-toy", "Generate a synthetic collection");
    make_toy.attach(c_toy);

    std::vector<std::string> args(argv + (argc > 0 ? 1 : 0), argv + argc);
    const std::string command = "idcm " + join_args(args);
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::CallForVersion& e) {
        out << e.what() << '\n';
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "idcm: usage: " << one_line(e.what()) << '\n';
        const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        err << sub->help();
        return kExitUsage;
    }

    try {
        if (c_window->parsed()) {
            return window.run(command);
        }
        if (c_teacher->parsed()) {
            return teacher_gen.run(command);
        }
        if (c_train->parsed()) {
            return train.run(command);
        }
        if (c_rank->parsed()) {
            return rank.run(command);
        }
        if (c_eval->parsed()) {
            return eval.run(command, out);
        }
        if (c_recall->parsed()) {
            return recall.run(command, out);
        }
        if (c_positions->parsed()) {
            return positions.run(command, out);
        }
        if (c_bench->parsed()) {
            return bench.run(command, out);
        }
        if (c_toy->parsed()) {
            return make_toy.run(command);
        }
    } catch (const std::exception& e) {
        err << "idcm: error: " << error_kind(e) << ": " << one_line(e.what()) << '\n';
        return kExitRuntime;
    }
    err << app.help();
    return kExitUsage;
}

int dispatch(int argc, const char* const* argv) { return dispatch(argc, argv, std::cout, std::cerr); }

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv;
    argv.push_back("idcm");
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    return dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
}

} // namespace idcm::cli
