#include "mtr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mtr/vocabulary.hpp"

namespace mtr {

std::vector<std::size_t> rank_descending(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

PRCurve pr_curve(std::span<const ScoredOutcome> outcomes, std::size_t total_positives) {
    PRCurve curve;
    curve.total_positives = total_positives;
    std::vector<double> scores(outcomes.size());
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        if (!std::isfinite(outcomes[i].score)) throw std::invalid_argument("pr_curve: non-finite score");
        scores[i] = outcomes[i].score;
    }
    const auto order = rank_descending(scores);
    std::size_t tp = 0;
    std::size_t seen = 0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& o = outcomes[order[i]];
        tp += o.true_positive ? 1 : 0;
        ++seen;
        const bool group_end = i + 1 == order.size() || outcomes[order[i + 1]].score != o.score;
        if (!group_end) continue;
        const double recall = total_positives == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(total_positives);
        curve.points.push_back({std::min(recall, 1.0), static_cast<double>(tp) / static_cast<double>(seen)});
    }
    return curve;
}

double average_precision(const PRCurve& curve, ApInterpolation mode) {
    if (curve.total_positives == 0 || curve.points.empty()) return 0.0;
    const auto& pts = curve.points;
    switch (mode) {
        case ApInterpolation::AllPoints: {
            std::vector<double> envelope(pts.size());
            double running = 0.0;
            for (std::size_t i = pts.size(); i-- > 0;) {
                running = std::max(running, pts[i].precision);
                envelope[i] = running;
            }
            double ap = 0.0;
            double prev_recall = 0.0;
            for (std::size_t i = 0; i < pts.size(); ++i) {
                ap += (pts[i].recall - prev_recall) * envelope[i];
                prev_recall = pts[i].recall;
            }
            return std::clamp(ap, 0.0, 1.0);
        }
        case ApInterpolation::ElevenPoint: {
            double ap = 0.0;
            for (int t = 0; t <= 10; ++t) {
                const double r = t / 10.0;
                double best = 0.0;
                for (const auto& p : pts) {
                    if (p.recall >= r) best = std::max(best, p.precision);
                }
                ap += best / 11.0;
            }
            return std::clamp(ap, 0.0, 1.0);
        }
        case ApInterpolation::NonInterpolated: {
            double ap = 0.0;
            double prev_recall = 0.0;
            for (const auto& p : pts) {
                ap += (p.recall - prev_recall) * p.precision;
                prev_recall = p.recall;
            }
            return std::clamp(ap, 0.0, 1.0);
        }
    }
    return 0.0;
}

namespace {

std::size_t count_tied(std::vector<double> scores) {
    std::sort(scores.begin(), scores.end());
    std::size_t tied = 0;
    for (std::size_t i = 0; i < scores.size();) {
        std::size_t j = i;
        while (j < scores.size() && scores[j] == scores[i]) ++j;
        if (j - i > 1) tied += j - i;
        i = j;
    }
    return tied;
}

void finish(APResult& r, const EvalOptions& opts) {
    r.ap.resize(r.curves.size());
    for (std::size_t c = 0; c < r.curves.size(); ++c) {
        r.ap[c] = average_precision(r.curves[c], opts.interpolation);
        if (r.positives[c] == 0) r.warnings.push_back("class '" + r.class_names[c] + "' has no positives; AP set to 0");
    }
    r.mean_ap = r.ap.empty() ? 0.0 : std::accumulate(r.ap.begin(), r.ap.end(), 0.0) / static_cast<double>(r.ap.size());
}

}  // namespace

DetectionMatch match_detections(std::span<const ScoredPrediction> preds, const GroundTruthBoxes& gts,
                                double iou_threshold) {
    if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
        throw std::invalid_argument("match_detections: iou_threshold must lie in (0,1]");
    }
    DetectionMatch m;
    m.true_positive.assign(preds.size(), false);
    m.matched.assign(preds.size(), std::nullopt);

    std::size_t total = 0;
    std::map<std::size_t, std::vector<bool>> used;
    for (const auto& [image, boxes] : gts) {
        total += boxes.size();
        used[image].assign(boxes.size(), false);
    }

    std::vector<double> scores(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) scores[i] = preds[i].score;
    for (std::size_t idx : rank_descending(scores)) {
        const auto& p = preds[idx];
        const auto it = gts.find(p.image_id);
        if (it == gts.end()) continue;
        auto& taken = used[p.image_id];
        std::optional<std::size_t> best;
        double best_iou = iou_threshold;
        for (std::size_t g = 0; g < it->second.size(); ++g) {
            if (taken[g]) continue;
            const double o = iou(p.box().box, it->second[g]);
            if (o > best_iou) {
                best_iou = o;
                best = g;
            }
        }
        if (best) {
            taken[*best] = true;
            m.true_positive[idx] = true;
            m.matched[idx] = best;
        }
    }

    std::vector<ScoredOutcome> outcomes(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) outcomes[i] = {preds[i].score, m.true_positive[i]};
    m.curve = pr_curve(outcomes, total);
    return m;
}

APResult evaluate_detection(std::span<const ScoredPrediction> preds, const GroundTruthBoxes& gts,
                            const EvalOptions& opts) {
    APResult r;
    r.class_names = {"person"};
    auto m = match_detections(preds, gts, opts.iou_threshold);
    r.positives = {m.curve.total_positives};
    r.curves = {std::move(m.curve)};
    std::vector<double> scores;
    for (const auto& p : preds) scores.push_back(p.score);
    r.tied_predictions = count_tied(scores);
    finish(r, opts);
    return r;
}

APResult evaluate_apk(std::span<const ScoredPrediction> preds, const GroundTruthInstances& gts,
                      const EvalOptions& opts) {
    if (!(opts.apk_alpha > 0.0)) throw std::invalid_argument("evaluate_apk: alpha must be positive");
    APResult r;
    for (std::size_t k = 0; k < kNumKeypoints; ++k) r.class_names.emplace_back(keypoint_name(k));
    r.positives.assign(kNumKeypoints, 0);

    // Torso heights; nullopt for instances that cannot anchor a match.
    std::map<std::size_t, std::vector<std::optional<double>>> heights;
    for (const auto& [image, instances] : gts) {
        auto& hs = heights[image];
        for (const auto& inst : instances) {
            std::optional<double> h;
            if (inst.keypoints) {
                h = torso_height(*inst.keypoints);
                if (!h) ++r.excluded_instances;
            }
            hs.push_back(h);
        }
    }

    std::vector<std::vector<std::size_t>> by_kp(kNumKeypoints);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const auto k = preds[i].keypoint().keypoint;
        if (k >= kNumKeypoints) throw std::invalid_argument("evaluate_apk: keypoint index out of range");
        by_kp[k].push_back(i);
    }

    for (std::size_t k = 0; k < kNumKeypoints; ++k) {
        std::map<std::size_t, std::vector<bool>> used;
        for (const auto& [image, instances] : gts) {
            used[image].assign(instances.size(), false);
            for (std::size_t g = 0; g < instances.size(); ++g) {
                if (heights[image][g] && (*instances[g].keypoints)[k].visible) ++r.positives[k];
            }
        }
        const auto& idx = by_kp[k];
        std::vector<double> scores(idx.size());
        for (std::size_t j = 0; j < idx.size(); ++j) scores[j] = preds[idx[j]].score;
        std::vector<ScoredOutcome> outcomes(idx.size());
        for (std::size_t j : rank_descending(scores)) {
            const auto& p = preds[idx[j]];
            outcomes[j] = {p.score, false};
            const auto it = gts.find(p.image_id);
            if (it == gts.end()) continue;
            const auto& kpt = p.keypoint();
            std::optional<std::size_t> best;
            double best_ratio = 0.0;
            for (std::size_t g = 0; g < it->second.size(); ++g) {
                const auto& h = heights[p.image_id][g];
                if (!h || used[p.image_id][g]) continue;
                const auto& gk = (*it->second[g].keypoints)[k];
                if (!gk.visible) continue;
                const double dist = std::hypot(kpt.x - gk.x, kpt.y - gk.y);
                if (!(dist < opts.apk_alpha * *h)) continue;
                const double ratio = dist / *h;
                if (!best || ratio < best_ratio) {
                    best = g;
                    best_ratio = ratio;
                }
            }
            if (best) {
                used[p.image_id][*best] = true;
                outcomes[j].true_positive = true;
            }
        }
        r.curves.push_back(pr_curve(outcomes, r.positives[k]));
        r.tied_predictions += count_tied(scores);
    }
    if (r.excluded_instances > 0) {
        r.warnings.push_back(std::to_string(r.excluded_instances) + " instance(s) without a torso height excluded");
    }
    finish(r, opts);
    return r;
}

APResult evaluate_action_classification(std::span<const ClassifiedBox> boxes, std::size_t num_actions,
                                        const EvalOptions& opts) {
    APResult r;
    for (std::size_t a = 0; a < num_actions; ++a) {
        r.class_names.emplace_back(a < kNumActions ? std::string(kActionNames[a]) : "action" + std::to_string(a));
    }
    r.positives.assign(num_actions, 0);
    for (const auto& b : boxes) {
        if (b.scores.size() != num_actions) {
            throw std::invalid_argument("evaluate_action_classification: score vector size mismatch");
        }
        if (b.true_action >= num_actions) throw std::invalid_argument("evaluate_action_classification: bad label");
        ++r.positives[b.true_action];
    }
    for (std::size_t a = 0; a < num_actions; ++a) {
        std::vector<ScoredOutcome> outcomes;
        std::vector<double> scores;
        outcomes.reserve(boxes.size());
        for (const auto& b : boxes) {
            outcomes.push_back({b.scores[a], b.true_action == a});
            scores.push_back(b.scores[a]);
        }
        r.curves.push_back(pr_curve(outcomes, r.positives[a]));
        r.tied_predictions += count_tied(scores);
    }
    finish(r, opts);
    return r;
}

APResult evaluate_action_detection(std::span<const ScoredPrediction> preds, const GroundTruthInstances& gts,
                                   std::size_t num_actions, const EvalOptions& opts) {
    APResult r;
    for (std::size_t a = 0; a < num_actions; ++a) {
        r.class_names.emplace_back(a < kNumActions ? std::string(kActionNames[a]) : "action" + std::to_string(a));
    }
    for (std::size_t a = 0; a < num_actions; ++a) {
        GroundTruthBoxes boxes;
        for (const auto& [image, instances] : gts) {
            auto& b = boxes[image];
            for (const auto& inst : instances) {
                if (inst.action && *inst.action == a) b.push_back(inst.box);
            }
        }
        std::vector<ScoredPrediction> cls;
        std::vector<double> scores;
        for (const auto& p : preds) {
            if (p.box().label == a) {
                cls.push_back(p);
                scores.push_back(p.score);
            }
        }
        auto m = match_detections(cls, boxes, opts.iou_threshold);
        r.positives.push_back(m.curve.total_positives);
        r.curves.push_back(std::move(m.curve));
        r.tied_predictions += count_tied(scores);
    }
    finish(r, opts);
    return r;
}

std::vector<std::size_t> non_max_suppression_indices(std::span<const ScoredPrediction> preds, double iou_threshold) {
    if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) {
        throw std::invalid_argument("non_max_suppression: iou_threshold must lie in (0,1)");
    }
    std::vector<double> scores(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) scores[i] = preds[i].score;
    std::map<std::pair<std::size_t, std::size_t>, std::vector<Box>> kept_by_group;
    std::vector<std::size_t> kept;
    for (std::size_t idx : rank_descending(scores)) {
        const auto& p = preds[idx];
        auto& group = kept_by_group[{p.image_id, p.box().label}];
        const bool suppressed =
            std::any_of(group.begin(), group.end(), [&](const Box& k) { return iou(k, p.box().box) > iou_threshold; });
        if (suppressed) continue;
        group.push_back(p.box().box);
        kept.push_back(idx);
    }
    return kept;
}

std::vector<ScoredPrediction> non_max_suppression(std::span<const ScoredPrediction> preds, double iou_threshold) {
    std::vector<ScoredPrediction> kept;
    for (std::size_t idx : non_max_suppression_indices(preds, iou_threshold)) kept.push_back(preds[idx]);
    return kept;
}

}  // namespace mtr
