#include "mtr_cli/commands.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>
#include <sstream>

#include "mtr/checkpoint.hpp"
#include "mtr/dataset_io.hpp"
#include "mtr/hashing.hpp"
#include "mtr/parallel.hpp"
#include "mtr/pipeline.hpp"
#include "mtr/vocabulary.hpp"

namespace mtr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::filesystem::path trace_path(const fs::path& checkpoint) {
    return checkpoint.string() + ".trace.jsonl";
}

std::string encode_trace(const std::vector<LossTracePoint>& trace) {
    std::string out;
    for (const auto& p : trace) {
        out += json{{"iteration", p.iteration},
                    {"total", p.total},
                    {"detection", p.detection},
                    {"pose", p.pose},
                    {"action", p.action}}
                   .dump();
        out += '\n';
    }
    return out;
}

std::optional<LossTracePoint> last_trace_point(const fs::path& checkpoint) {
    const auto path = trace_path(checkpoint);
    if (!fs::exists(path)) return std::nullopt;
    std::istringstream in(read_file(path));
    std::string line, last;
    while (std::getline(in, line)) {
        if (!line.empty()) last = line;
    }
    if (last.empty()) return std::nullopt;
    const json j = json::parse(last);
    return LossTracePoint{j.at("iteration").get<std::size_t>(), j.at("total").get<double>(),
                          j.at("detection").get<double>(), j.at("pose").get<double>(), j.at("action").get<double>()};
}

Model load_model(const fs::path& path) {
    Checkpoint c = load_checkpoint(path);
    return Model{c.config, c.weights, std::move(c.state.params)};
}

bool is_object_model(const Model& m) { return m.config.num_actions == kNumContextObjects; }

FeatureLayer parse_feature(const std::string& name) {
    if (name == "fc6") return FeatureLayer::Fc6;
    if (name == "fc7") return FeatureLayer::Fc7;
    if (name == "softmax") return FeatureLayer::Softmax;
    throw ConfigError("unknown feature layer '" + name + "'");
}

ApInterpolation parse_interpolation(const std::string& name) {
    if (name == "all-points") return ApInterpolation::AllPoints;
    if (name == "11-point") return ApInterpolation::ElevenPoint;
    if (name == "none") return ApInterpolation::NonInterpolated;
    throw ConfigError("unknown interpolation '" + name + "'");
}

void require(bool ok, const std::string& message) {
    if (!ok) throw IncompatibleInputs(message);
}

}  // namespace

void cmd_generate(const GenerateArgs& args) {
    GenerateConfig cfg;
    if (args.config) {
        std::string text;
        try {
            text = read_file(*args.config);
        } catch (const std::exception& e) {
            throw ConfigError(e.what());
        }
        cfg = parse_generate_config(text);
    }
    Dataset d = generate_synthetic(cfg, args.threads);
    const std::string hash = write_dataset(args.out, d);
    for (std::size_t i = 0; i < std::min(args.preview, d.train.size()); ++i) {
        export_ppm(d.train[i].canvas, args.out / ("preview_" + std::to_string(i) + ".ppm"));
    }
    std::cout << "wrote " << d.train.size() << " train and " << d.val.size() << " val scenes to " << args.out.string()
              << "\ndataset " << hash << "\n";
}

TrainResult cmd_train(const TrainArgs& args) {
    if (args.preset.has_value() == args.weights.has_value()) {
        throw ConfigError("give exactly one of --preset or --lambda");
    }
    TaskWeights weights;
    if (args.preset) {
        const auto w = preset_weights(*args.preset);
        if (!w) throw ConfigError("unknown preset '" + *args.preset + "'");
        weights = *w;
    } else {
        weights = *args.weights;
    }
    try {
        weights.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    RegionTargets targets;
    if (args.targets == "persons") {
        targets = RegionTargets::Persons;
    } else if (args.targets == "objects") {
        targets = RegionTargets::Objects;
    } else {
        throw ConfigError("--targets must be persons or objects");
    }

    const Dataset d = read_dataset(args.dataset);
    TrainSetup setup = default_setup(weights, args.seed, targets);
    if (args.iterations) setup.train.iterations = *args.iterations;
    if (args.learning_rate) setup.train.learning_rate = *args.learning_rate;
    if (args.batch_size) setup.train.batch_size = *args.batch_size;
    if (args.jitter) setup.regions.jitter_per_instance = *args.jitter;
    setup.regions.jitter_for_detection = args.jitter_detection;
    setup.train.threads = args.threads;

    std::optional<TrainState> resume;
    if (args.resume) {
        Checkpoint prev = load_checkpoint(*args.resume);
        if (!(prev.config == setup.net)) throw IncompatibleInputs("resume checkpoint has a different network config");
        if (!(prev.weights == weights)) throw IncompatibleInputs("resume checkpoint was trained with different weights");
        resume = std::move(prev.state);
    }
    TrainResult result = train_on_scenes(d.train, setup, std::move(resume));
    save_checkpoint(args.out, Checkpoint{setup.net, weights, args.seed, result.state});
    write_file_atomic(trace_path(args.out), encode_trace(result.trace));
    std::cout << "trained " << result.trace.size() << " iterations (" << result.state.iterations_done
              << " total); checkpoint " << args.out.string() << "\n";
    if (!result.trace.empty()) {
        const auto& last = result.trace.back();
        std::cout << "final loss " << last.total << " (det " << last.detection << ", pose " << last.pose
                  << ", action " << last.action << ")\n";
    }
    return result;
}

Report cmd_evaluate(const EvaluateArgs& args) {
    if (!(args.nms_threshold > 0.0 && args.nms_threshold < 1.0)) throw ConfigError("--nms-threshold must lie in (0,1)");
    if (!args.checkpoint && !args.predictions_file) {
        throw ConfigError("give --checkpoint or --predictions-file");
    }
    if (args.context && args.task != EvalTask::ActionCls) throw ConfigError("--context applies to action-cls only");
    if (args.context && !args.object_checkpoint) throw ConfigError("--context needs --object-checkpoint");
    if (args.context && args.rescore) throw ConfigError("--context and --rescore are exclusive");
    if (args.score_mode != "product" && args.score_mode != "action-only") {
        throw ConfigError("--score-mode must be product or action-only");
    }

    EvalSettings s;
    s.nms_threshold = args.nms_threshold;
    s.threads = args.threads;
    s.action_feature = parse_feature(args.svm_feature);
    s.metric.interpolation = parse_interpolation(args.interpolation);
    s.score_mode = args.score_mode == "product" ? ActionScoreMode::Product : ActionScoreMode::ActionOnly;

    const Dataset d = read_dataset(args.dataset);
    const std::vector<Scene>& val = d.val;

    Report rep;
    rep.task = std::string(task_name(args.task));
    rep.dataset_hash = d.dataset_hash;
    json echo = {{"task", rep.task},
                 {"nms_threshold", s.nms_threshold},
                 {"interpolation", args.interpolation},
                 {"iou_threshold", s.metric.iou_threshold},
                 {"apk_alpha", s.metric.apk_alpha}};

    std::vector<ScoredPrediction> preds;
    std::vector<Scene> test;
    std::optional<GroundTruthScores> classified;

    if (args.predictions_file) {
        preds = read_predictions(*args.predictions_file, args.task);
        test = val;
        rep.mode = "predictions-file";
        rep.label = args.label.value_or(args.predictions_file->stem().string());
        echo["predictions_sha256"] = sha256_file(*args.predictions_file);
        if (args.task == EvalTask::ActionCls) classified = classify_from_predictions(preds, test);
    } else {
        const Model model = load_model(*args.checkpoint);
        const Checkpoint header = load_checkpoint(*args.checkpoint);
        rep.seed = header.seed;
        rep.label = args.label.value_or(args.checkpoint->stem().string());
        rep.final_loss = last_trace_point(*args.checkpoint);
        echo["checkpoint_sha256"] = sha256_file(*args.checkpoint);
        echo["weights"] = {model.weights.detection, model.weights.pose, model.weights.action};
        require(!is_object_model(model), "checkpoint is an object model; person tasks need a person checkpoint");
        const auto& w = model.weights;

        switch (args.task) {
            case EvalTask::Det:
                require(w.detection > 0.0, "task det needs a checkpoint trained with a detection loss");
                test = val;
                preds = detection_predictions(model, test, s);
                rep.mode = "raw";
                break;
            case EvalTask::Apk:
                require(w.pose > 0.0, "task apk needs a checkpoint trained with a pose loss");
                if (args.rescore) {
                    const auto fit = even_scenes(val);
                    test = odd_scenes(val);
                    const auto svms = train_keypoint_svms(model, fit, s);
                    preds = keypoint_predictions(model, test, s, &svms);
                    rep.mode = "svm";
                } else {
                    require(w.detection > 0.0, "task apk without --rescore scores keypoints by the detection head");
                    test = val;
                    preds = keypoint_predictions(model, test, s);
                    rep.mode = "raw";
                }
                break;
            case EvalTask::ActionCls:
                if (args.context) {
                    require(w.action > 0.0, "--context rescoring needs an action head");
                    const Model objects = load_model(*args.object_checkpoint);
                    require(is_object_model(objects), "--object-checkpoint is not an object model");
                    echo["object_checkpoint_sha256"] = sha256_file(*args.object_checkpoint);
                    const auto fit = even_scenes(val);
                    test = odd_scenes(val);
                    const auto svms = train_context_svms(model, objects, fit, s);
                    classified = classify_ground_truth_context(model, objects, svms, test, s);
                    rep.mode = "context";
                } else if (args.rescore) {
                    test = val;
                    const auto svms = train_action_svms(model, d.train, s);
                    classified = classify_ground_truth_svm(model, svms, test, s);
                    rep.mode = "svm";
                } else {
                    require(w.action > 0.0, "task action-cls needs an action head (or --rescore)");
                    test = val;
                    classified = classify_ground_truth(model, test, s);
                    rep.mode = "raw";
                }
                break;
            case EvalTask::ActionDet:
                test = val;
                if (args.rescore) {
                    const auto svms = train_action_svms(model, d.train, s);
                    preds = action_detection_predictions(model, test, s, &svms);
                    rep.mode = "svm";
                } else {
                    require(w.action > 0.0, "task action-det needs an action head (or --rescore)");
                    if (s.score_mode == ActionScoreMode::Product) {
                        require(w.detection > 0.0, "product scoring needs a detection head; use --score-mode action-only");
                    }
                    preds = action_detection_predictions(model, test, s);
                    rep.mode = args.score_mode;
                }
                break;
        }
    }
    if (args.rescore || args.context) {
        echo["svm"] = {{"C", s.svm.C}, {"iterations", s.svm.iterations}, {"seed", s.svm.seed},
                       {"feature", args.task == EvalTask::Apk ? "fc7" : args.svm_feature}};
    }
    echo["mode"] = rep.mode;
    rep.split = test.size() == val.size() ? "val" : "val-odd";
    rep.config_json = echo.dump();
    rep.config_hash = sha256_hex(rep.config_json);

    switch (args.task) {
        case EvalTask::Det:
            rep.result = evaluate_detection(preds, person_ground_truth(test), s.metric);
            break;
        case EvalTask::Apk:
            rep.result = evaluate_apk(preds, instance_ground_truth(test), s.metric);
            break;
        case EvalTask::ActionCls:
            rep.result = evaluate_action_classification(classified->boxes, kNumActions, s.metric);
            break;
        case EvalTask::ActionDet:
            rep.result = evaluate_action_detection(preds, instance_ground_truth(test), kNumActions, s.metric);
            break;
    }
    rep.result.class_names = task_class_names(args.task);

    if (args.save_predictions) {
        if (classified) {
            // Ground-truth boxes with one record per action score.
            preds.clear();
            for (std::size_t b = 0; b < classified->boxes.size(); ++b) {
                const Box& box = test[classified->scene[b]].instances[classified->instance[b]].box;
                for (std::size_t a = 0; a < classified->boxes[b].scores.size(); ++a) {
                    preds.push_back({classified->scene[b], classified->boxes[b].scores[a], BoxPayload{box, a}});
                }
            }
        }
        write_predictions(*args.save_predictions, preds, args.task);
    }

    fs::path out = args.out;
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_file_atomic(out.string() + ".txt", format_report_table(rep));
    write_file_atomic(out.string() + ".jsonl", encode_report(rep));
    std::cout << format_report_table(rep);
    return rep;
}

Comparison cmd_report(const ReportArgs& args) {
    if (args.reports.empty()) throw ConfigError("give at least one report");
    std::vector<Report> reports;
    for (const auto& p : args.reports) reports.push_back(decode_report(read_file(p)));
    Comparison c;
    try {
        c = compare_reports(reports);
    } catch (const std::invalid_argument& e) {
        throw IncompatibleInputs(e.what());
    }
    fs::create_directories(args.out / "curves");
    write_file_atomic(args.out / "comparison.txt", c.table);
    write_file_atomic(args.out / "comparison.jsonl", c.records);
    for (const auto& [name, csv] : c.curve_files) write_file_atomic(args.out / "curves" / name, csv);
    std::cout << c.table;
    return c;
}

int run(int argc, char** argv) {
    CLI::App app{"Multitask person-region network on synthetic scenes"};
    app.require_subcommand(1);
    const std::size_t default_threads = default_thread_count();

    GenerateArgs gen;
    gen.threads = default_threads;
    std::string gen_config, gen_out;
    auto* g = app.add_subcommand("generate", "Generate a synthetic dataset");
    g->add_option("--config", gen_config, "JSON config (defaults when omitted)");
    g->add_option("--out", gen_out, "Output directory")->required();
    g->add_option("--preview", gen.preview, "Write PPM previews of the first N training scenes");
    g->add_option("--threads", gen.threads, "Worker threads (default from MTR_THREADS)");

    TrainArgs tr;
    tr.threads = default_threads;
    std::string tr_dataset, tr_out, tr_resume, tr_preset;
    std::vector<double> tr_lambda;
    std::size_t tr_iters = 0, tr_batch = 0, tr_jitter = 0;
    double tr_lr = 0.0;
    auto* t = app.add_subcommand("train", "Train a network on a dataset");
    t->add_option("--dataset", tr_dataset, "Dataset directory")->required();
    auto* preset_opt = t->add_option("--preset", tr_preset,
                                     "pose | action | detection | detection-action | detection-pose-action");
    auto* lambda_opt = t->add_option("--lambda", tr_lambda, "Explicit weights: lambda_D lambda_P lambda_A")->expected(3);
    preset_opt->excludes(lambda_opt);
    t->add_option("--targets", tr.targets, "persons | objects");
    t->add_option("--out", tr_out, "Checkpoint path")->required();
    auto* resume_opt = t->add_option("--resume", tr_resume, "Continue from a checkpoint");
    auto* iters_opt = t->add_option("--iterations", tr_iters, "SGD iterations");
    auto* lr_opt = t->add_option("--lr", tr_lr, "Learning rate");
    auto* batch_opt = t->add_option("--batch", tr_batch, "Minibatch size");
    auto* jitter_opt = t->add_option("--jitter", tr_jitter, "Jittered copies per ground-truth box");
    bool jitter_pose_action_only = false;
    t->add_flag("--jitter-no-detection", jitter_pose_action_only, "Exclude jittered regions from the detection loss");
    t->add_option("--seed", tr.seed, "Seed");
    t->add_option("--threads", tr.threads, "Worker threads (default from MTR_THREADS)");

    EvaluateArgs ev;
    ev.threads = default_threads;
    std::string ev_ckpt, ev_dataset, ev_task, ev_obj, ev_preds, ev_save, ev_out, ev_label;
    auto* e = app.add_subcommand("evaluate", "Evaluate a checkpoint or a predictions file");
    auto* ckpt_opt = e->add_option("--checkpoint", ev_ckpt, "Checkpoint");
    e->add_option("--dataset", ev_dataset, "Dataset directory")->required();
    e->add_option("--task", ev_task, "apk | action-cls | det | action-det")->required();
    e->add_flag("--rescore", ev.rescore, "Score with linear SVMs on network features");
    e->add_flag("--context", ev.context, "Context rescoring (action-cls)");
    auto* obj_opt = e->add_option("--object-checkpoint", ev_obj, "Object model for --context");
    e->add_option("--nms-threshold", ev.nms_threshold, "NMS overlap threshold");
    auto* preds_opt = e->add_option("--predictions-file", ev_preds, "Evaluate these predictions instead of a model");
    auto* save_opt = e->add_option("--save-predictions", ev_save, "Write the scored predictions");
    e->add_option("--score-mode", ev.score_mode, "product | action-only (action-det)");
    e->add_option("--svm-feature", ev.svm_feature, "fc6 | fc7 | softmax (action SVMs)");
    e->add_option("--interpolation", ev.interpolation, "all-points | 11-point | none");
    auto* label_opt = e->add_option("--label", ev_label, "Row label in reports");
    e->add_option("--out", ev_out, "Report path prefix (.txt and .jsonl)")->required();
    e->add_option("--threads", ev.threads, "Worker threads (default from MTR_THREADS)");

    ReportArgs rp;
    std::vector<std::string> rp_reports;
    std::string rp_out;
    auto* r = app.add_subcommand("report", "Merge evaluation reports");
    r->add_option("reports", rp_reports, "Report .jsonl files")->required();
    r->add_option("--out", rp_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (g->parsed()) {
            if (!gen_config.empty()) gen.config = gen_config;
            gen.out = gen_out;
            cmd_generate(gen);
        } else if (t->parsed()) {
            tr.dataset = tr_dataset;
            tr.out = tr_out;
            if (*preset_opt) tr.preset = tr_preset;
            if (*lambda_opt) tr.weights = TaskWeights{tr_lambda[0], tr_lambda[1], tr_lambda[2]};
            if (*resume_opt) tr.resume = tr_resume;
            if (*iters_opt) tr.iterations = tr_iters;
            if (*lr_opt) tr.learning_rate = tr_lr;
            if (*batch_opt) tr.batch_size = tr_batch;
            if (*jitter_opt) tr.jitter = tr_jitter;
            tr.jitter_detection = !jitter_pose_action_only;
            cmd_train(tr);
        } else if (e->parsed()) {
            const auto task = parse_task(ev_task);
            if (!task) throw ConfigError("unknown task '" + ev_task + "'");
            ev.task = *task;
            ev.dataset = ev_dataset;
            ev.out = ev_out;
            if (*ckpt_opt) ev.checkpoint = ev_ckpt;
            if (*obj_opt) ev.object_checkpoint = ev_obj;
            if (*preds_opt) ev.predictions_file = ev_preds;
            if (*save_opt) ev.save_predictions = ev_save;
            if (*label_opt) ev.label = ev_label;
            cmd_evaluate(ev);
        } else if (r->parsed()) {
            for (const auto& p : rp_reports) rp.reports.emplace_back(p);
            rp.out = rp_out;
            cmd_report(rp);
        }
    } catch (const ConfigError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}

}  // namespace mtr::cli
