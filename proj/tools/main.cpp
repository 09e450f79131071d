#include "opinionmap/annotation_http.hpp"
#include "opinionmap/annotation_service.hpp"
#include "opinionmap/augmentation.hpp"
#include "opinionmap/config.hpp"
#include "opinionmap/network.hpp"
#include "opinionmap/rng.hpp"
#include "opinionmap/synthetic.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using namespace opinionmap;
using nlohmann::json;

namespace {

std::atomic<bool> g_stop{false};

void log(const std::string& message) { std::cerr << "opinionmap: " << message << '\n'; }

fs::path out_path(const RunConfig& cfg, const std::string& name) {
    fs::create_directories(cfg.out_dir);
    return fs::path(cfg.out_dir) / name;
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
    body(out);
    if (!out) throw Error(ErrorCode::io_error, "error writing " + path.string());
    log("wrote " + path.string());
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io_error, "cannot read " + path);
    return in;
}

OntologyStore load_store(const RunConfig& cfg) {
    if (!fs::exists(cfg.store)) throw Error(ErrorCode::not_found, "store " + cfg.store + " does not exist; run ingest first");
    return OntologyStore::load(cfg.store);
}

ScriptedOracle load_oracle(const std::string& path) {
    if (path.empty()) throw Error(ErrorCode::config_error, "gold: a gold label file is required for the scripted oracle");
    auto in = open_input(path);
    return ScriptedOracle::load(in);
}

std::vector<LabeledExample> examples_for(const OntologyStore& store, const std::vector<std::string>& ids, const Vocabulary& vocab) {
    std::vector<LabeledExample> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back({id, vectorize(store.posting(id)->text, vocab), store.label_of(id)});
    return out;
}

std::vector<std::string> topic_ids(const OntologyStore& store) {
    std::vector<std::string> out;
    for (const auto& t : store.topics()) out.push_back(t.id);
    return out;
}

// Applies gold labels for `ids` as iteration 0 labels.
void apply_gold(ScriptedOracle& oracle, const std::vector<std::string>& ids, OntologyStore& store) {
    std::vector<AnnotationRequest> requests;
    for (const auto& id : ids) {
        if (!store.posting(id)) throw Error(ErrorCode::unknown_entity, "labels refer to unknown posting '" + id + "'");
        AnnotationRequest r;
        r.posting_id = id;
        requests.push_back(std::move(r));
    }
    oracle.annotate(0, requests, store);
}

// --- ingest ---------------------------------------------------------------

struct IngestArgs {
    std::string input;
    std::string keywords;
};

void run_ingest(const RunConfig& cfg, const IngestArgs& args) {
    OntologyStore store;
    if (fs::exists(cfg.store)) {
        store = OntologyStore::load(cfg.store);
    } else {
        for (const auto& t : default_topics()) store.add_topic(t);
    }
    TopicKeywords keywords;
    if (!args.keywords.empty()) {
        // topic_id<TAB>keyword per line
        auto in = open_input(args.keywords);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            const auto tab = line.find('\t');
            if (line.empty() || tab == std::string::npos) continue;
            keywords[line.substr(0, tab)].insert(line.substr(tab + 1));
        }
    } else {
        for (const auto& t : store.topics()) keywords[t.id] = t.keywords;
    }
    auto in = open_input(args.input);
    const auto report = store.ingest_postings(in, keywords);
    store.save(cfg.store);
    log("ingested " + std::to_string(report.ingested) + " postings, skipped " + std::to_string(report.duplicates) + " duplicates");
    json errors = json::array();
    for (const auto& e : report.errors) errors.push_back({{"line", e.line}, {"message", e.message}});
    write_file(out_path(cfg, "ingest-report.json"), [&](std::ostream& out) {
        out << json{{"ingested", report.ingested},
                    {"duplicates", report.duplicates},
                    {"off_keyword", report.off_keyword},
                    {"per_topic", report.per_topic},
                    {"errors", errors}}
                   .dump(2)
            << '\n';
    });
}

// --- label-import ---------------------------------------------------------

struct LabelImportArgs {
    std::string labels;
    std::string test_labels;
};

void run_label_import(const RunConfig& cfg, const LabelImportArgs& args) {
    auto store = load_store(cfg);
    auto oracle = load_oracle(args.labels);
    std::vector<std::string> ids;
    for (const auto& [id, label] : oracle.labels()) ids.push_back(id);

    std::vector<std::string> test_ids;
    if (!args.test_labels.empty()) {
        auto test = load_oracle(args.test_labels);
        for (const auto& [id, label] : test.labels()) {
            test_ids.push_back(id);
            store.reserve_for_test(id);
        }
        apply_gold(test, test_ids, store);
    } else if (cfg.test_size > 0 && store.test_postings().empty()) {
        if (cfg.test_size > ids.size()) {
            throw Error(ErrorCode::config_error, "test_size: " + std::to_string(cfg.test_size) + " test postings requested but only " +
                                                     std::to_string(ids.size()) + " labels given; pass --test-size 0 or --test-labels");
        }
        auto shuffled = ids;
        Rng rng(derive_seed(cfg.seed, 0x74657374ull));
        rng.shuffle(shuffled);
        test_ids.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(cfg.test_size));
        std::sort(test_ids.begin(), test_ids.end());
        for (const auto& id : test_ids) store.reserve_for_test(id);
    }
    apply_gold(oracle, ids, store);
    store.save(cfg.store);
    write_file(out_path(cfg, "label-import.json"), [&](std::ostream& out) {
        out << json{{"labeled", store.training_postings().size()},
                    {"test_reserved", store.test_postings().size()},
                    {"active_opinions", store.opinions(true).size()}}
                   .dump(2)
            << '\n';
    });
}

// --- train / evaluate / sample / classify ---------------------------------

struct ModelArgs {
    std::string models;
    std::string input;
    int iteration = 1;
    bool cross_validate = false;
};

std::string models_dir(const RunConfig& cfg, const ModelArgs& args) {
    return args.models.empty() ? (fs::path(cfg.out_dir) / "models").string() : args.models;
}

void run_train(const RunConfig& cfg) {
    AugmentationLoop loop(load_store(cfg), cfg.loop());
    const auto& record = loop.start();
    log("trained on " + std::to_string(record.labeled) + " postings, test macro-F1 " + format_double(record.test_report.macro_f1));
    loop.write_models(out_path(cfg, "models"));
    write_file(out_path(cfg, "train-metrics.csv"), [&](std::ostream& out) { loop.write_metrics(out); });
}

void run_evaluate(const RunConfig& cfg, const ModelArgs& args) {
    const auto store = load_store(cfg);
    const auto stack = read_stack(models_dir(cfg, args));
    const auto test = examples_for(store, store.test_postings(), stack.vocabulary());
    json doc = {{"test_report", to_json(evaluate(stack.topic_classifiers(), stack.vocabulary(), test))}};
    if (args.cross_validate) {
        CrossValidationOptions options;
        options.folds = cfg.folds;
        options.search_budget = cfg.search_budget;
        options.base = cfg.loop().hyperparameters;
        options.seed = derive_seed(cfg.seed, 0x6376ull);
        const auto training = examples_for(store, store.training_postings(), stack.vocabulary());
        const auto cv = cross_validate(training, topic_ids(store), stack.vocabulary(), options);
        json best = json::object();
        for (const auto& [topic, hp] : cv.best) {
            best[topic] = {{"regularization", hp.regularization}, {"epochs", hp.epochs}, {"learning_rate", hp.learning_rate}};
        }
        doc["cv_report"] = to_json(cv.report);
        doc["best_hyperparameters"] = best;
    }
    write_file(out_path(cfg, "evaluation.json"), [&](std::ostream& out) { out << doc.dump(2) << '\n'; });
}

void run_sample(const RunConfig& cfg, const ModelArgs& args) {
    const auto store = load_store(cfg);
    const auto stack = read_stack(models_dir(cfg, args));
    const auto pool_ids = store.postings_in_state(LabelState::unlabeled);
    std::vector<FeatureVector> features;
    features.reserve(pool_ids.size());
    for (const auto& id : pool_ids) features.push_back(vectorize(store.posting(id)->text, stack.vocabulary()));
    std::vector<TopicPool> pools;
    for (const auto& c : stack.topic_classifiers()) {
        TopicPool pool{c.topic_id, {}};
        for (std::size_t i = 0; i < pool_ids.size(); ++i) pool.postings.push_back({pool_ids[i], c.probability(features[i])});
        pools.push_back(std::move(pool));
    }
    const auto batch = compose_batch(args.iteration, pools, {cfg.active, cfg.top_confidence, cfg.random},
                                     derive_seed(cfg.seed, 0x68ull, static_cast<std::uint64_t>(args.iteration)), cfg.cap);
    const auto rows = batch.manifest();
    write_file(out_path(cfg, "manifest-" + std::to_string(args.iteration) + ".tsv"),
               [&](std::ostream& out) { write_manifest(out, rows); });
}

void run_classify(const RunConfig& cfg, const ModelArgs& args) {
    if (args.input.empty()) throw Error(ErrorCode::config_error, "input: a file with one posting per line is required");
    const auto stack = read_stack(models_dir(cfg, args));
    auto in = open_input(args.input);
    write_file(out_path(cfg, "predictions.tsv"), [&](std::ostream& out) {
        out << "row\ttopics\topinions\n";
        std::string line;
        for (std::size_t row = 1; std::getline(in, line); ++row) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            const auto p = stack.predict(std::to_string(row), line);
            auto join = [](const std::set<std::string>& items) {
                std::string s;
                for (const auto& item : items) s += (s.empty() ? "" : ",") + item;
                return s;
            };
            out << row << '\t' << join(p.predicted_topics()) << '\t' << join(p.opinions) << '\n';
        }
    });
}

// --- iterate / baseline ---------------------------------------------------

struct LoopArgs {
    std::string oracle = "scripted";
    std::string gold;
    int iterations = 0;  // 0: until convergence
    std::vector<std::string> annotators;
    bool double_coding = false;
};

void write_loop_outputs(const RunConfig& cfg, const AugmentationLoop& loop, const std::string& prefix) {
    write_file(out_path(cfg, prefix + "ledger.jsonl"), [&](std::ostream& out) { loop.write_ledger(out); });
    write_file(out_path(cfg, prefix + "metrics.csv"), [&](std::ostream& out) { loop.write_metrics(out); });
    loop.write_models(out_path(cfg, prefix + "models"));
}

void drive(const RunConfig& cfg, AugmentationLoop& loop, AnnotationSource& source, const LoopArgs& args, RunKind kind) {
    std::unique_ptr<HttpExternalClassifier> external;
    std::unique_ptr<ExternalScorer> scorer;
    if (!cfg.external_classifier.empty()) {
        external = std::make_unique<HttpExternalClassifier>(cfg.external_classifier);
        scorer = std::make_unique<ExternalScorer>(*external);
        loop.set_scorer(scorer.get());
    }
    loop.start();
    const int limit = args.iterations > 0 ? args.iterations : cfg.max_iterations;
    while (loop.iteration() < limit) {
        const auto& r = loop.run_iteration(source, kind);
        log("iteration " + std::to_string(r.iteration) + ": test macro-F1 " + format_double(r.test_report.macro_f1) +
            (r.converged ? " (converged: " + r.reason + ")" : ""));
        if (args.iterations == 0 && r.converged) break;
    }
    loop.set_scorer(nullptr);
}

void run_iterate(const RunConfig& cfg, const LoopArgs& args) {
    AugmentationLoop loop(load_store(cfg), cfg.loop());
    if (args.oracle == "scripted") {
        auto oracle = load_oracle(args.gold);
        drive(cfg, loop, oracle, args, RunKind::hitl);
    } else if (args.oracle == "service") {
        OntologyStore live = load_store(cfg);
        AnnotationService::Options options;
        options.lease = std::chrono::minutes(cfg.lease_minutes);
        options.double_coding = args.double_coding;
        AnnotationService service(live, options);
        for (const auto& a : args.annotators) service.register_annotator(a);
        AnnotationHttpServer server(service);
        const auto hp = parse_bind(cfg.bind);
        const int port = server.bind(hp.host, hp.port);
        server.start();
        log("annotation service listening on " + hp.host + ":" + std::to_string(port));
        ServiceAnnotationSource source(service);
        drive(cfg, loop, source, args, RunKind::hitl);
        server.stop();
    } else {
        throw Error(ErrorCode::config_error, "oracle: expected 'scripted' or 'service', got '" + args.oracle + "'");
    }
    write_loop_outputs(cfg, loop, "");
    write_file(out_path(cfg, "store.jsonl"), [&](std::ostream& out) { loop.store().write_records(out); });
}

void run_baseline_cmd(const RunConfig& cfg, const LoopArgs& args) {
    if (args.iterations < 1) throw Error(ErrorCode::config_error, "iterations: baseline needs --iterations >= 1");
    auto config = cfg.loop();
    AugmentationLoop loop(load_store(cfg), config);
    auto oracle = load_oracle(args.gold);
    drive(cfg, loop, oracle, args, RunKind::baseline);
    write_loop_outputs(cfg, loop, "baseline-");
}

// --- network --------------------------------------------------------------

struct NetworkArgs {
    std::string relations;
    std::string flags;
    std::string window;
    std::string end;
    std::string ratios;
};

struct NetworkInput {
    std::vector<OpinionRelation> relations;
    std::optional<std::map<std::string, bool>> flags;
    std::optional<DayWindow> window;
};

NetworkInput network_input(const RunConfig& cfg, const NetworkArgs& args) {
    NetworkInput in;
    const bool have_store = fs::exists(cfg.store);
    if (!args.relations.empty()) {
        auto file = open_input(args.relations);
        in.relations = read_relations(file);
    } else if (have_store) {
        in.relations = relations_from_store(OntologyStore::load(cfg.store));
    } else {
        throw Error(ErrorCode::config_error, "relations: give --relations or an existing --store");
    }
    if (!args.flags.empty()) {
        // opinion_id,conspiracy with conspiracy in {0,1,true,false}
        auto file = open_input(args.flags);
        std::map<std::string, bool> flags;
        std::string line;
        for (std::size_t n = 1; std::getline(file, line); ++n) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || (n == 1 && line.starts_with("opinion_id"))) continue;
            const auto comma = line.find(',');
            if (comma == std::string::npos) throw Error(ErrorCode::malformed_record, "flags line " + std::to_string(n) + ": expected id,flag");
            const auto v = line.substr(comma + 1);
            flags[line.substr(0, comma)] = v == "1" || v == "true";
        }
        in.flags = std::move(flags);
    } else if (have_store) {
        in.flags = conspiracy_flags(OntologyStore::load(cfg.store));
    }
    const auto full = span_of(in.relations);
    if (!full) throw Error(ErrorCode::empty_input, "no posting-opinion relations");
    const Day last = args.end.empty() ? full->last : parse_day(args.end);
    in.window = args.window.empty() ? DayWindow{full->first, last} : DayWindow::ending(last, args.window);
    return in;
}

void run_network_build(const RunConfig& cfg, const NetworkArgs& args) {
    const auto in = network_input(cfg, args);
    const auto snapshot = build_snapshot(in.relations, *in.window);
    write_file(out_path(cfg, "relations.tsv"), [&](std::ostream& out) { write_relations(out, in.relations); });
    write_file(out_path(cfg, "frequency.csv"), [&](std::ostream& out) {
        write_frequency_csv(out, frequency_distribution(in.relations, in.window));
    });
    write_file(out_path(cfg, "edges.csv"), [&](std::ostream& out) {
        out << "source,target,weight\n";
        for (const auto& [e, w] : snapshot.edges) out << e.first << ',' << e.second << ',' << w << '\n';
    });
}

void run_network_proportions(const RunConfig& cfg, const NetworkArgs& args) {
    const auto in = network_input(cfg, args);
    const auto series = edge_weight_proportions(daily_snapshots(in.relations, in.window));
    write_file(out_path(cfg, "proportions.csv"), [&](std::ostream& out) { write_series_csv(out, series); });
}

void run_network_centrality(const RunConfig& cfg, const NetworkArgs& args) {
    const auto in = network_input(cfg, args);
    auto snapshot = build_snapshot(in.relations, *in.window);
    compute_centrality(snapshot);
    write_file(out_path(cfg, "centrality.csv"), [&](std::ostream& out) { write_centrality_csv(out, snapshot); });
    if (!in.flags) {
        log("no conspiracy flags (no store and no --flags), skipping group series");
        return;
    }
    auto daily = daily_snapshots(in.relations, in.window);
    for (auto& [day, s] : daily) compute_centrality(s);
    const auto series = group_centrality_series(daily, *in.flags);
    write_file(out_path(cfg, "centrality-groups.csv"), [&](std::ostream& out) { write_series_csv(out, series); });
    if (!args.ratios.empty()) {
        auto file = open_input(args.ratios);
        const auto overlay = overlay_series(series, read_ratios(file));
        write_file(out_path(cfg, "overlay.csv"), [&](std::ostream& out) { write_overlay_csv(out, overlay); });
    }
}

void run_network_export(const RunConfig& cfg, const NetworkArgs& args) {
    const auto in = network_input(cfg, args);
    auto snapshot = build_snapshot(in.relations, *in.window);
    compute_centrality(snapshot);
    write_file(out_path(cfg, "network.json"), [&](std::ostream& out) {
        write_node_link(out, snapshot, in.flags.value_or(std::map<std::string, bool>{}));
    });
}

// --- agreement / serve / synth --------------------------------------------

struct AgreementArgs {
    std::string a;
    std::string b;
};

void run_agreement(const RunConfig& cfg, const AgreementArgs& args) {
    auto fa = open_input(args.a);
    auto fb = open_input(args.b);
    const auto a = read_coded_labels(fa);
    const auto b = read_coded_labels(fb);
    std::size_t shared = 0;
    for (const auto& [posting, items] : a) shared += b.count(posting);
    const double value = label_agreement(a, b);
    log("agreement " + format_double(value) + " over " + std::to_string(shared) + " postings");
    write_file(out_path(cfg, "agreement.json"),
               [&](std::ostream& out) { out << json{{"shared", shared}, {"agreement", value}}.dump(2) << '\n'; });
}

struct ServeArgs {
    std::vector<std::string> annotators;
    bool double_coding = false;
    std::string models;
    std::string model_bind;
};

void run_serve(const RunConfig& cfg, const ServeArgs& args) {
    OntologyStore store = load_store(cfg);
    AnnotationService::Options options;
    options.lease = std::chrono::minutes(cfg.lease_minutes);
    options.double_coding = args.double_coding;
    AnnotationService service(store, options);
    for (const auto& a : args.annotators) service.register_annotator(a);
    AnnotationHttpServer server(service);
    const auto hp = parse_bind(cfg.bind);
    const int port = server.bind(hp.host, hp.port);

    std::unique_ptr<NativeEndpoint> endpoint;
    std::unique_ptr<ClassifierHttpServer> model_server;
    if (!args.models.empty()) {
        if (args.model_bind.empty()) throw Error(ErrorCode::config_error, "model-bind: required with --models");
        endpoint = std::make_unique<NativeEndpoint>();
        endpoint->set_stack(std::make_shared<const ClassifierStack>(read_stack(args.models)));
        model_server = std::make_unique<ClassifierHttpServer>(*endpoint);
        const auto mhp = parse_bind(args.model_bind);
        const int mport = model_server->bind(mhp.host, mhp.port);
        model_server->start();
        log("model endpoint listening on " + mhp.host + ":" + std::to_string(mport));
    }
    std::signal(SIGINT, [](int) { g_stop = true; });
    std::signal(SIGTERM, [](int) { g_stop = true; });
    server.start();
    log("annotation service listening on " + hp.host + ":" + std::to_string(port));
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
    server.stop();
    if (model_server) model_server->stop();
    store.save(cfg.store);
    log("saved " + cfg.store);
}

struct SynthArgs {
    SyntheticOptions options;
    std::string gold;
};

void run_synth(const RunConfig& cfg, SynthArgs args) {
    args.options.seed = cfg.seed;
    const auto corpus = make_synthetic_corpus(args.options);
    corpus.store.save(cfg.store);
    log("wrote " + cfg.store);
    const auto gold = args.gold.empty() ? out_path(cfg, "gold.jsonl") : fs::path(args.gold);
    write_file(gold, [&](std::ostream& out) { corpus.oracle().save(out); });
}

int exit_code(ErrorCode code) {
    return code == ErrorCode::config_error || code == ErrorCode::invalid_argument ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"opinionmap: human-in-the-loop dataset augmentation and opinion network analysis"};
    app.set_config("--config", "", "key-value config file (flags and OPINIONMAP_* variables override it)");
    app.fallthrough();
    app.require_subcommand(1);

    // Later occurrences win, which is how environment values rank below flags.
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    RunConfig cfg;
    std::vector<std::string> from_env;
    auto opt = [&](const std::string& name, auto& var, const std::string& help) {
        std::string env = "OPINIONMAP_" + name;
        std::transform(env.begin(), env.end(), env.begin(), [](char c) { return c == '-' ? '_' : static_cast<char>(std::toupper(c)); });
        if (const char* value = std::getenv(env.c_str())) from_env.push_back("--" + name + "=" + value);
        return app.add_option("--" + name, var, help + " [env: " + env + "]")->capture_default_str();
    };
    opt("store", cfg.store, "ontology store file");
    opt("out-dir", cfg.out_dir, "directory for every output file");
    opt("seed", cfg.seed, "master seed");
    opt("active", cfg.active, "active-learning picks per topic");
    opt("top-confidence", cfg.top_confidence, "top-confidence picks per topic");
    opt("random", cfg.random, "random picks per topic");
    opt("cap", cfg.cap, "maximum postings per iteration");
    opt("epsilon", cfg.epsilon, "convergence threshold on the test macro-F1 gain");
    opt("max-iterations", cfg.max_iterations, "iteration cap");
    opt("folds", cfg.folds, "cross-validation folds");
    opt("test-size", cfg.test_size, "postings reserved for testing by label-import");
    opt("ngram-min", cfg.ngram_min, "smallest n-gram");
    opt("ngram-max", cfg.ngram_max, "largest n-gram");
    opt("min-df", cfg.min_df, "minimum document frequency");
    opt("regularization", cfg.regularization, "L2 strength");
    opt("epochs", cfg.epochs, "training epochs");
    opt("learning-rate", cfg.learning_rate, "AdaGrad base step");
    opt("search-budget", cfg.search_budget, "inner random-search draws for evaluate --cv");
    opt("opinion-threshold", cfg.opinion_threshold, "opinion decision threshold");
    opt("bind", cfg.bind, "annotation service address host:port");
    opt("lease-minutes", cfg.lease_minutes, "task lease length");
    opt("external-classifier", cfg.external_classifier, "base URL of an external classifier");

    IngestArgs ingest_args;
    auto* ingest = app.add_subcommand("ingest", "ingest posting records into the store");
    ingest->add_option("--input", ingest_args.input, "posting records (JSON lines)")->required();
    ingest->add_option("--keywords", ingest_args.keywords, "topic_id<TAB>keyword file; defaults to the store topics");

    LabelImportArgs import_args;
    auto* label_import = app.add_subcommand("label-import", "import gold labels into the store");
    label_import->add_option("--labels", import_args.labels, "label records (JSON lines)")->required();
    label_import->add_option("--test-labels", import_args.test_labels, "labels to reserve as the test set");

    ModelArgs model_args;
    auto* train = app.add_subcommand("train", "train the classifier stack on the labeled postings");
    auto* evaluate_cmd = app.add_subcommand("evaluate", "evaluate a model directory on the test postings");
    evaluate_cmd->add_option("--models", model_args.models, "model directory (default <out-dir>/models)");
    evaluate_cmd->add_flag("--cv", model_args.cross_validate, "also run nested cross-validation");
    auto* sample = app.add_subcommand("sample", "compose one batch from the unlabeled pool");
    sample->add_option("--models", model_args.models, "model directory (default <out-dir>/models)");
    sample->add_option("--iteration", model_args.iteration, "iteration index")->capture_default_str();
    auto* classify = app.add_subcommand("classify", "label one posting per input line");
    classify->add_option("--models", model_args.models, "model directory (default <out-dir>/models)");
    classify->add_option("--input", model_args.input, "one posting text per line")->required();

    LoopArgs loop_args;
    auto* iterate = app.add_subcommand("iterate", "run the sampling and labeling loop");
    iterate->add_option("--oracle", loop_args.oracle, "scripted or service")->capture_default_str();
    iterate->add_option("--gold", loop_args.gold, "gold labels for the scripted oracle");
    iterate->add_option("--iterations", loop_args.iterations, "fixed iteration count (default: until convergence)");
    iterate->add_option("--annotators", loop_args.annotators, "annotator ids for the service oracle")->delimiter(',');
    iterate->add_flag("--double-coding", loop_args.double_coding, "give every selection to two annotators");
    auto* baseline = app.add_subcommand("baseline", "random-only batches from the same start");
    baseline->add_option("--gold", loop_args.gold, "gold labels")->required();
    baseline->add_option("--iterations", loop_args.iterations, "iteration count")->required();

    NetworkArgs net_args;
    auto* network = app.add_subcommand("network", "opinion co-occurrence analysis");
    network->require_subcommand(1);
    auto net_opts = [&](CLI::App* sub) {
        sub->add_option("--relations", net_args.relations, "posting_id<TAB>opinion_id<TAB>date file (default: from the store)");
        sub->add_option("--flags", net_args.flags, "opinion_id,conspiracy file (default: from the store)");
        sub->add_option("--window", net_args.window, "window length such as 14d (default: all days)");
        sub->add_option("--end", net_args.end, "last day of the window (default: last day with data)");
        return sub;
    };
    auto* net_build = net_opts(network->add_subcommand("build", "relations, frequencies and window edges"));
    auto* net_props = net_opts(network->add_subcommand("proportions", "daily edge-weight proportions"));
    auto* net_central = net_opts(network->add_subcommand("centrality", "window centrality and daily group means"));
    net_central->add_option("--ratios", net_args.ratios, "date,ratio file to overlay on the group series");
    auto* net_export = net_opts(network->add_subcommand("export", "node-link JSON of the window network"));

    AgreementArgs agree_args;
    auto* agreement = app.add_subcommand("agreement", "exact-set agreement between two coders");
    agreement->add_option("--a", agree_args.a, "posting_id<TAB>items file of the first coder")->required();
    agreement->add_option("--b", agree_args.b, "posting_id<TAB>items file of the second coder")->required();

    ServeArgs serve_args;
    auto* serve = app.add_subcommand("serve", "run the annotation service until interrupted");
    serve->add_option("--annotators", serve_args.annotators, "annotator ids to register")->delimiter(',');
    serve->add_flag("--double-coding", serve_args.double_coding, "give every selection to two annotators");
    serve->add_option("--models", serve_args.models, "also serve /v1/classify from this model directory");
    serve->add_option("--model-bind", serve_args.model_bind, "host:port for the model endpoint");

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "write a planted-signal corpus and its gold labels");
    synth->add_option("--seed-labeled", synth_args.options.seed_labeled, "labeled seed postings")->capture_default_str();
    synth->add_option("--unlabeled", synth_args.options.unlabeled, "unlabeled pool size")->capture_default_str();
    synth->add_option("--test", synth_args.options.test, "test postings")->capture_default_str();
    synth->add_option("--gold", synth_args.gold, "gold label output (default <out-dir>/gold.jsonl)");

    // CLI11 reads the config file before its own environment lookup, so
    // environment values go in as leading arguments instead.
    std::vector<char*> args{argv[0]};
    for (auto& a : from_env) args.push_back(a.data());
    args.insert(args.end(), argv + 1, argv + argc);
    try {
        app.parse(static_cast<int>(args.size()), args.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        cfg.validate();
        if (ingest->parsed()) run_ingest(cfg, ingest_args);
        else if (label_import->parsed()) run_label_import(cfg, import_args);
        else if (train->parsed()) run_train(cfg);
        else if (evaluate_cmd->parsed()) run_evaluate(cfg, model_args);
        else if (sample->parsed()) run_sample(cfg, model_args);
        else if (classify->parsed()) run_classify(cfg, model_args);
        else if (iterate->parsed()) run_iterate(cfg, loop_args);
        else if (baseline->parsed()) run_baseline_cmd(cfg, loop_args);
        else if (net_build->parsed()) run_network_build(cfg, net_args);
        else if (net_props->parsed()) run_network_proportions(cfg, net_args);
        else if (net_central->parsed()) run_network_centrality(cfg, net_args);
        else if (net_export->parsed()) run_network_export(cfg, net_args);
        else if (agreement->parsed()) run_agreement(cfg, agree_args);
        else if (serve->parsed()) run_serve(cfg, serve_args);
        else if (synth->parsed()) run_synth(cfg, synth_args);
    } catch (const Error& e) {
        std::cerr << "opinionmap: error [" << to_string(e.code()) << "]: " << e.what() << '\n';
        return exit_code(e.code());
    } catch (const std::exception& e) {
        std::cerr << "opinionmap: error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
