#include "mtr/records.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "mtr/checkpoint.hpp"
#include "mtr/vocabulary.hpp"

namespace mtr {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<EvalTask, std::string_view>, 4> kTaskNames = {{
    {EvalTask::Apk, "apk"},
    {EvalTask::ActionCls, "action-cls"},
    {EvalTask::Det, "det"},
    {EvalTask::ActionDet, "action-det"},
}};

std::size_t class_index(EvalTask task, const std::string& name) {
    const auto names = task_class_names(task);
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) {
        throw std::runtime_error("class '" + name + "' is not valid for task " + std::string(task_name(task)));
    }
    return static_cast<std::size_t>(it - names.begin());
}

std::string percent(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
    return buf;
}

std::string pad(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string table(const std::vector<std::string>& classes, const std::vector<std::pair<std::string, const APResult*>>& rows) {
    std::size_t label_w = 7;
    for (const auto& [label, r] : rows) label_w = std::max(label_w, label.size());
    std::vector<std::size_t> widths;
    for (const auto& c : classes) widths.push_back(std::max<std::size_t>(c.size(), 5));
    std::ostringstream out;
    out << std::string(label_w, ' ');
    for (std::size_t c = 0; c < classes.size(); ++c) out << "  " << pad(classes[c], widths[c]);
    out << "  " << pad("mAP", 5) << '\n';
    for (const auto& [label, r] : rows) {
        out << label << std::string(label_w - label.size(), ' ');
        for (std::size_t c = 0; c < classes.size(); ++c) out << "  " << pad(percent(r->ap.at(c)), widths[c]);
        out << "  " << pad(percent(r->mean_ap), 5) << '\n';
    }
    return out.str();
}

std::string file_safe(std::string s) {
    for (auto& ch : s) {
        if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_') ch = '_';
    }
    return s;
}

}  // namespace

std::string_view task_name(EvalTask task) {
    for (const auto& [t, n] : kTaskNames) {
        if (t == task) return n;
    }
    throw std::invalid_argument("unknown task");
}

std::optional<EvalTask> parse_task(std::string_view name) {
    for (const auto& [t, n] : kTaskNames) {
        if (n == name) return t;
    }
    return std::nullopt;
}

std::vector<std::string> task_class_names(EvalTask task) {
    std::vector<std::string> out;
    switch (task) {
        case EvalTask::Apk:
            for (std::size_t k = 0; k < kNumKeypoints; ++k) out.emplace_back(keypoint_name(k));
            break;
        case EvalTask::ActionCls:
        case EvalTask::ActionDet:
            for (auto n : kActionNames) out.emplace_back(n);
            break;
        case EvalTask::Det:
            out.emplace_back("person");
            break;
    }
    return out;
}

std::string encode_prediction(const ScoredPrediction& pred, EvalTask task) {
    const auto names = task_class_names(task);
    json j = {{"image_id", pred.image_id}, {"score", pred.score}};
    if (pred.has_box()) {
        const auto& b = pred.box();
        j["class"] = names.at(b.label);
        j["box"] = {b.box.x_min(), b.box.y_min(), b.box.x_max(), b.box.y_max()};
    } else {
        const auto& k = pred.keypoint();
        j["class"] = names.at(k.keypoint);
        j["keypoint"] = {k.x, k.y};
    }
    return j.dump();
}

ScoredPrediction decode_prediction(std::string_view line, EvalTask task) {
    const json j = json::parse(line);
    const auto image_id = j.at("image_id").get<std::size_t>();
    const auto score = j.at("score").get<double>();
    if (!std::isfinite(score)) throw std::runtime_error("prediction score must be finite");
    const std::size_t cls = class_index(task, j.at("class").get<std::string>());
    if (task == EvalTask::Apk) {
        const auto& k = j.at("keypoint");
        return {image_id, score, KeypointPayload{k.at(0).get<double>(), k.at(1).get<double>(), cls}};
    }
    const auto& b = j.at("box");
    return {image_id, score,
            BoxPayload{Box(b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()),
                       cls}};
}

std::vector<ScoredPrediction> read_predictions(const std::filesystem::path& path, EvalTask task) {
    std::istringstream in(read_file(path));
    std::vector<ScoredPrediction> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            out.push_back(decode_prediction(line, task));
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + " line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

void write_predictions(const std::filesystem::path& path, const std::vector<ScoredPrediction>& preds, EvalTask task) {
    std::string out;
    for (const auto& p : preds) out += encode_prediction(p, task) + "\n";
    write_file_atomic(path, out);
}

// --- reports -------------------------------------------------------------------

std::string format_report_table(const Report& report) {
    std::ostringstream out;
    out << "task " << report.task << ", " << report.label << " (" << report.mode << "), split " << report.split
        << "\n";
    out << "dataset " << report.dataset_hash << "\nconfig  " << report.config_hash << "\nseed    " << report.seed
        << "\n";
    if (report.final_loss) {
        const auto& l = *report.final_loss;
        char buf[160];
        std::snprintf(buf, sizeof buf, "final training loss at iteration %zu: total %.5f det %.5f pose %.5f action %.5f\n",
                      l.iteration, l.total, l.detection, l.pose, l.action);
        out << buf;
    }
    out << "AP (%)\n" << table(report.result.class_names, {{report.label, &report.result}});
    if (report.result.excluded_instances > 0) {
        out << report.result.excluded_instances << " ground-truth instances excluded (no torso height)\n";
    }
    for (const auto& w : report.result.warnings) out << "warning: " << w << "\n";
    return out.str();
}

std::string encode_report(const Report& report) {
    const auto& r = report.result;
    json header = {
        {"type", "header"},
        {"version", kRecordVersion},
        {"task", report.task},
        {"label", report.label},
        {"mode", report.mode},
        {"split", report.split},
        {"dataset_hash", report.dataset_hash},
        {"config_hash", report.config_hash},
        {"seed", report.seed},
        {"config", report.config_json.empty() ? json::object() : json::parse(report.config_json)},
    };
    if (report.final_loss) {
        const auto& l = *report.final_loss;
        header["final_loss"] = {{"iteration", l.iteration},
                                {"total", l.total},
                                {"detection", l.detection},
                                {"pose", l.pose},
                                {"action", l.action}};
    }
    std::string out = header.dump() + "\n";
    for (std::size_t c = 0; c < r.class_names.size(); ++c) {
        json points = json::array();
        if (c < r.curves.size()) {
            for (const auto& p : r.curves[c].points) points.push_back({p.recall, p.precision});
        }
        json row = {{"type", "class"},
                    {"class", r.class_names[c]},
                    {"ap", r.ap.at(c)},
                    {"positives", c < r.positives.size() ? r.positives[c] : 0},
                    {"curve", points}};
        out += row.dump() + "\n";
    }
    json summary = {{"type", "summary"},
                    {"mean_ap", r.mean_ap},
                    {"excluded_instances", r.excluded_instances},
                    {"tied_predictions", r.tied_predictions},
                    {"warnings", r.warnings}};
    out += summary.dump() + "\n";
    return out;
}

Report decode_report(std::string_view text) {
    Report rep;
    bool have_header = false, have_summary = false;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        const auto type = j.at("type").get<std::string>();
        if (type == "header") {
            if (j.at("version").get<int>() != kRecordVersion) throw std::runtime_error("report: unsupported version");
            rep.task = j.at("task").get<std::string>();
            rep.label = j.at("label").get<std::string>();
            rep.mode = j.value("mode", "");
            rep.split = j.value("split", "");
            rep.dataset_hash = j.at("dataset_hash").get<std::string>();
            rep.config_hash = j.at("config_hash").get<std::string>();
            rep.seed = j.at("seed").get<std::uint64_t>();
            rep.config_json = j.at("config").dump();
            if (j.contains("final_loss")) {
                const auto& l = j["final_loss"];
                rep.final_loss = LossTracePoint{l.at("iteration").get<std::size_t>(), l.at("total").get<double>(),
                                                l.at("detection").get<double>(), l.at("pose").get<double>(),
                                                l.at("action").get<double>()};
            }
            have_header = true;
        } else if (type == "class") {
            rep.result.class_names.push_back(j.at("class").get<std::string>());
            rep.result.ap.push_back(j.at("ap").get<double>());
            rep.result.positives.push_back(j.at("positives").get<std::size_t>());
            PRCurve curve;
            curve.total_positives = rep.result.positives.back();
            for (const auto& p : j.at("curve")) curve.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
            rep.result.curves.push_back(std::move(curve));
        } else if (type == "summary") {
            rep.result.mean_ap = j.at("mean_ap").get<double>();
            rep.result.excluded_instances = j.at("excluded_instances").get<std::size_t>();
            rep.result.tied_predictions = j.at("tied_predictions").get<std::size_t>();
            rep.result.warnings = j.at("warnings").get<std::vector<std::string>>();
            have_summary = true;
        }
    }
    if (!have_header || !have_summary) throw std::runtime_error("report: missing header or summary record");
    return rep;
}

Comparison compare_reports(const std::vector<Report>& reports) {
    if (reports.empty()) throw std::invalid_argument("compare_reports: no reports given");
    for (const auto& r : reports) {
        if (r.dataset_hash != reports.front().dataset_hash) {
            throw std::invalid_argument("reports come from different datasets: " + reports.front().dataset_hash +
                                        " (" + reports.front().label + ") vs " + r.dataset_hash + " (" + r.label +
                                        ")");
        }
    }
    std::map<std::string, std::vector<const Report*>> by_task;
    std::vector<std::string> task_order;
    for (const auto& r : reports) {
        if (!by_task.contains(r.task)) task_order.push_back(r.task);
        by_task[r.task].push_back(&r);
    }
    Comparison out;
    out.table = "dataset " + reports.front().dataset_hash + "\n";
    for (const auto& task : task_order) {
        const auto& group = by_task[task];
        std::vector<std::pair<std::string, const APResult*>> rows;
        for (const auto* r : group) {
            rows.emplace_back(r->label, &r->result);
            json row = {{"type", "row"},     {"task", task},         {"label", r->label},
                        {"mode", r->mode},   {"split", r->split},    {"config_hash", r->config_hash},
                        {"seed", r->seed},   {"ap", r->result.ap},   {"mean_ap", r->result.mean_ap},
                        {"classes", r->result.class_names}};
            out.records += row.dump() + "\n";
            for (std::size_t c = 0; c < r->result.curves.size(); ++c) {
                std::string csv = "recall,precision\n";
                for (const auto& p : r->result.curves[c].points) {
                    char buf[64];
                    std::snprintf(buf, sizeof buf, "%.10g,%.10g\n", p.recall, p.precision);
                    csv += buf;
                }
                out.curve_files.emplace_back(
                    file_safe(task) + "__" + file_safe(r->label) + "__" + file_safe(r->result.class_names.at(c)) + ".csv",
                    std::move(csv));
            }
        }
        out.table += "\n" + task + " AP (%)\n" + table(group.front()->result.class_names, rows);
    }
    return out;
}

}  // namespace mtr
