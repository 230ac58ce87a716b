#include "mtr/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mtr/parallel.hpp"
#include "mtr/vocabulary.hpp"

namespace mtr {

std::optional<TaskWeights> preset_weights(std::string_view name) {
    for (const auto& p : kPresets) {
        if (p.name == name) return p.weights;
    }
    return std::nullopt;
}

std::vector<Instance> object_instances(const Scene& scene) {
    std::vector<Instance> out;
    for (const auto& o : scene.objects) out.push_back(Instance{o.box, std::nullopt, o.object_class});
    return out;
}

std::vector<Box> object_proposals(const Scene& scene) {
    std::vector<Box> targets;
    for (const auto& o : scene.objects) targets.push_back(o.box);
    return generate_proposals(targets, scene.canvas.width, scene.canvas.height, 12, 8, scene_seed(scene.seed, 0x0b1ec7));
}

SceneRegions::SceneRegions(std::span<const Scene> scenes, const RegionOptions& opts) : scenes_(scenes), opts_(opts) {
    for (std::size_t si = 0; si < scenes.size(); ++si) {
        const Scene& scene = scenes[si];
        const bool objects = opts.targets == RegionTargets::Objects;
        const std::vector<Instance> instances = objects ? object_instances(scene) : scene.instances;
        const std::vector<Box> proposals = objects ? object_proposals(scene) : scene.proposals;

        auto add = [&](const Box& b, bool jittered) {
            RegionSample s = label_region(b, instances);
            if (jittered && !opts.jitter_for_detection) s.det_label = DetLabel::Ignore;
            samples_.push_back(std::move(s));
            scene_of_.push_back(si);
        };
        for (const auto& p : proposals) add(p, false);
        for (std::size_t i = 0; i < instances.size(); ++i) {
            if (opts.include_gt_boxes) add(instances[i].box, false);
            if (opts.jitter_per_instance > 0) {
                const auto seed = scene_seed(scene_seed(opts.seed, scene.seed), i);
                for (const auto& b : jitter_augment(instances[i].box, opts.jitter_per_instance, opts.jitter_min_iou, seed)) {
                    add(b, true);
                }
            }
        }
    }
}

void SceneRegions::render(std::size_t i, std::span<double> out) const {
    render_region(scenes_[scene_of_.at(i)].canvas, samples_[i].region, opts_.crop, out);
}

TrainSetup default_setup(const TaskWeights& weights, std::uint64_t seed, RegionTargets targets) {
    TrainSetup s;
    if (targets == RegionTargets::Objects) s.net.num_actions = kNumContextObjects;
    s.train.weights = weights;
    s.train.seed = seed;
    // The pose loss is divided by |K|, so a pose-only objective tolerates a larger step.
    const bool pose_only = weights.pose > 0.0 && weights.detection == 0.0 && weights.action == 0.0;
    s.train.learning_rate = pose_only ? 0.05 : 0.02;
    s.train.momentum = 0.9;
    s.train.batch_size = 32;
    s.train.iterations = 4000;
    s.train.positive_fraction = weights.detection > 0.0 ? 0.5 : 1.0;
    s.train.clip_norm = 10.0;
    s.regions.targets = targets;
    s.regions.seed = seed;
    return s;
}

TrainResult train_on_scenes(std::span<const Scene> scenes, const TrainSetup& setup, std::optional<TrainState> resume) {
    if (setup.net.input.channels != kCanvasChannels || setup.net.input.height != setup.regions.crop ||
        setup.net.input.width != setup.regions.crop) {
        throw ConfigError("network input shape does not match the region crop");
    }
    const MultitaskNet net(setup.net);
    const SceneRegions regions(scenes, setup.regions);
    return train(net, regions, setup.train, std::move(resume));
}

Model train_model(std::span<const Scene> scenes, const TrainSetup& setup) {
    auto result = train_on_scenes(scenes, setup);
    return Model{setup.net, setup.train.weights, std::move(result.state.params)};
}

std::vector<HeadOutputs> predict_regions(const Model& model, const Canvas& canvas, std::span<const Box> boxes,
                                         std::size_t crop) {
    const MultitaskNet net(model.config);
    ForwardCache cache;
    std::vector<double> input(kCanvasChannels * crop * crop);
    std::vector<HeadOutputs> out;
    out.reserve(boxes.size());
    for (const auto& b : boxes) {
        render_region(canvas, b, crop, input);
        net.forward(model.params, input, cache);
        out.push_back(cache.outputs);
    }
    return out;
}

GroundTruthBoxes person_ground_truth(std::span<const Scene> scenes) {
    GroundTruthBoxes gts;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        auto& v = gts[i];
        for (const auto& inst : scenes[i].instances) v.push_back(inst.box);
    }
    return gts;
}

GroundTruthInstances instance_ground_truth(std::span<const Scene> scenes) {
    GroundTruthInstances gts;
    for (std::size_t i = 0; i < scenes.size(); ++i) gts[i] = scenes[i].instances;
    return gts;
}

std::vector<Scene> even_scenes(std::span<const Scene> scenes) {
    std::vector<Scene> out;
    for (std::size_t i = 0; i < scenes.size(); i += 2) out.push_back(scenes[i]);
    return out;
}

std::vector<Scene> odd_scenes(std::span<const Scene> scenes) {
    std::vector<Scene> out;
    for (std::size_t i = 1; i < scenes.size(); i += 2) out.push_back(scenes[i]);
    return out;
}

namespace {

// Network outputs for every proposal of every scene, computed in parallel.
std::vector<std::vector<HeadOutputs>> proposal_outputs(const Model& model, std::span<const Scene> scenes,
                                                       const EvalSettings& s) {
    std::vector<std::vector<HeadOutputs>> out(scenes.size());
    parallel_for(scenes.size(), s.threads,
                 [&](std::size_t i) { out[i] = predict_regions(model, scenes[i].canvas, scenes[i].proposals, s.crop); });
    return out;
}

LinearSvm constant_svm(std::size_t dim, double bias, const SvmTrainConfig& cfg) {
    return LinearSvm{std::vector<double>(dim, 0.0), bias, cfg.C, cfg.seed};
}

// Trains one SVM per column of `positive[i][c]`; columns lacking one label
// get a constant model that scores every input on that side.
std::vector<LinearSvm> train_svm_columns(const std::vector<std::vector<double>>& features,
                                         const std::vector<std::vector<bool>>& positive, std::size_t columns,
                                         const EvalSettings& s) {
    if (features.empty()) throw std::invalid_argument("rescoring: no training regions");
    const std::size_t dim = features.front().size();
    std::vector<LinearSvm> models(columns);
    parallel_for(columns, s.threads, [&](std::size_t c) {
        std::vector<int> labels(features.size());
        std::size_t pos = 0;
        for (std::size_t i = 0; i < features.size(); ++i) {
            labels[i] = positive[i][c] ? 1 : -1;
            pos += positive[i][c] ? 1 : 0;
        }
        if (pos == 0) {
            models[c] = constant_svm(dim, -1.0, s.svm);
        } else if (pos == features.size()) {
            models[c] = constant_svm(dim, 1.0, s.svm);
        } else {
            SvmTrainConfig cfg = s.svm;
            cfg.seed = scene_seed(s.svm.seed, c);
            models[c] = svm_train(features, labels, cfg);
        }
    });
    return models;
}

}  // namespace

std::vector<ScoredPrediction> detection_predictions(const Model& model, std::span<const Scene> scenes,
                                                    const EvalSettings& s) {
    const auto outputs = proposal_outputs(model, scenes, s);
    std::vector<ScoredPrediction> preds;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        for (std::size_t r = 0; r < scenes[i].proposals.size(); ++r) {
            preds.push_back({i, outputs[i][r].person_prob(), BoxPayload{scenes[i].proposals[r], 0}});
        }
    }
    return non_max_suppression(preds, s.nms_threshold);
}

std::vector<LinearSvm> train_keypoint_svms(const Model& model, std::span<const Scene> scenes, const EvalSettings& s) {
    const auto outputs = proposal_outputs(model, scenes, s);
    std::vector<KeypointRegion> regions;
    std::vector<std::vector<double>> features;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        for (std::size_t r = 0; r < scenes[i].proposals.size(); ++r) {
            const auto& o = outputs[i][r];
            regions.push_back({i, denormalize_keypoints(o.keypoints(), scenes[i].proposals[r])});
            features.push_back(o.feature(s.keypoint_feature));
        }
    }
    const auto sets = build_keypoint_svm_sets(regions, instance_ground_truth(scenes), s.metric.apk_alpha);
    std::vector<std::vector<bool>> positive(regions.size(), std::vector<bool>(kNumKeypoints, false));
    for (std::size_t k = 0; k < kNumKeypoints; ++k) {
        for (std::size_t r : sets[k].positives) positive[r][k] = true;
    }
    return train_svm_columns(features, positive, kNumKeypoints, s);
}

std::vector<ScoredPrediction> keypoint_predictions(const Model& model, std::span<const Scene> scenes,
                                                   const EvalSettings& s, const std::vector<LinearSvm>* svms) {
    if (svms && svms->size() != kNumKeypoints) throw std::invalid_argument("keypoint_predictions: need 13 SVMs");
    const auto outputs = proposal_outputs(model, scenes, s);
    std::vector<ScoredPrediction> out;
    for (std::size_t k = 0; k < kNumKeypoints; ++k) {
        std::vector<ScoredPrediction> region_scores;
        std::vector<Keypoint> located;
        for (std::size_t i = 0; i < scenes.size(); ++i) {
            for (std::size_t r = 0; r < scenes[i].proposals.size(); ++r) {
                const auto& o = outputs[i][r];
                const Box& region = scenes[i].proposals[r];
                const double score = svms ? svm_score((*svms)[k], o.feature(s.keypoint_feature)) : o.person_prob();
                region_scores.push_back({i, score, BoxPayload{region, k}});
                const NormalizedKeypoint nk{o.pose_coords.at(2 * k), o.pose_coords.at(2 * k + 1), true};
                located.push_back(denormalize_keypoints(std::span(&nk, 1), region).front());
            }
        }
        for (std::size_t idx : non_max_suppression_indices(region_scores, s.nms_threshold)) {
            out.push_back({region_scores[idx].image_id, region_scores[idx].score,
                           KeypointPayload{located[idx].x, located[idx].y, k}});
        }
    }
    return out;
}

namespace {

// Calls fn(scene index, instance index, outputs) for every actioned ground-truth box.
template <typename Fn>
void for_each_actioned_box(const Model& model, std::span<const Scene> scenes, const EvalSettings& s, Fn&& fn) {
    std::vector<std::vector<HeadOutputs>> outputs(scenes.size());
    parallel_for(scenes.size(), s.threads, [&](std::size_t i) {
        std::vector<Box> boxes;
        for (const auto& inst : scenes[i].instances) boxes.push_back(inst.box);
        outputs[i] = predict_regions(model, scenes[i].canvas, boxes, s.crop);
    });
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        for (std::size_t j = 0; j < scenes[i].instances.size(); ++j) {
            if (scenes[i].instances[j].action) fn(i, j, outputs[i][j]);
        }
    }
}

}  // namespace

GroundTruthScores classify_ground_truth(const Model& model, std::span<const Scene> scenes, const EvalSettings& s) {
    GroundTruthScores out;
    for_each_actioned_box(model, scenes, s, [&](std::size_t i, std::size_t j, const HeadOutputs& o) {
        out.boxes.push_back({*scenes[i].instances[j].action, o.action_probs});
        out.scene.push_back(i);
        out.instance.push_back(j);
    });
    return out;
}

std::vector<LinearSvm> train_action_svms(const Model& model, std::span<const Scene> scenes, const EvalSettings& s) {
    std::vector<std::vector<double>> features;
    std::vector<std::vector<bool>> positive;
    for_each_actioned_box(model, scenes, s, [&](std::size_t i, std::size_t j, const HeadOutputs& o) {
        features.push_back(o.feature(s.action_feature));
        std::vector<bool> row(kNumActions, false);
        row.at(*scenes[i].instances[j].action) = true;
        positive.push_back(std::move(row));
    });
    return train_svm_columns(features, positive, kNumActions, s);
}

GroundTruthScores classify_ground_truth_svm(const Model& model, const std::vector<LinearSvm>& svms,
                                            std::span<const Scene> scenes, const EvalSettings& s) {
    GroundTruthScores out;
    for_each_actioned_box(model, scenes, s, [&](std::size_t i, std::size_t j, const HeadOutputs& o) {
        const auto f = o.feature(s.action_feature);
        std::vector<double> scores;
        for (const auto& m : svms) scores.push_back(svm_score(m, f));
        out.boxes.push_back({*scenes[i].instances[j].action, std::move(scores)});
        out.scene.push_back(i);
        out.instance.push_back(j);
    });
    return out;
}

GroundTruthScores classify_from_predictions(std::span<const ScoredPrediction> preds, std::span<const Scene> scenes) {
    GroundTruthScores out;
    std::vector<std::vector<std::size_t>> slot(scenes.size());
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        slot[i].assign(scenes[i].instances.size(), SIZE_MAX);
        for (std::size_t j = 0; j < scenes[i].instances.size(); ++j) {
            if (!scenes[i].instances[j].action) continue;
            slot[i][j] = out.boxes.size();
            out.boxes.push_back({*scenes[i].instances[j].action, std::vector<double>(kNumActions, 0.0)});
            out.scene.push_back(i);
            out.instance.push_back(j);
        }
    }
    std::vector<std::vector<bool>> seen(out.boxes.size(), std::vector<bool>(kNumActions, false));
    for (const auto& p : preds) {
        if (p.image_id >= scenes.size()) continue;
        const auto& b = p.box();
        if (b.label >= kNumActions) continue;
        const auto m = best_match(b.box, scenes[p.image_id].instances);
        if (!m || !(m->iou > 0.5)) continue;
        const std::size_t k = slot[p.image_id][m->index];
        if (k == SIZE_MAX) continue;
        auto& v = out.boxes[k].scores[b.label];
        v = seen[k][b.label] ? std::max(v, p.score) : p.score;
        seen[k][b.label] = true;
    }
    return out;
}

std::vector<ObjectDetection> detect_objects(const Model& object_model, const Scene& scene, const EvalSettings& s) {
    const auto proposals = object_proposals(scene);
    const auto outputs = predict_regions(object_model, scene.canvas, proposals, s.crop);
    std::vector<ScoredPrediction> preds;
    for (std::size_t r = 0; r < proposals.size(); ++r) {
        const auto scores = score_action_detection(outputs[r], ActionScoreMode::Product);
        for (std::size_t o = 0; o < scores.size(); ++o) preds.push_back({0, scores[o], BoxPayload{proposals[r], o}});
    }
    std::vector<ObjectDetection> out;
    for (const auto& p : non_max_suppression(preds, s.nms_threshold)) {
        out.push_back({p.box().box, p.box().label, p.score});
    }
    return out;
}

std::vector<std::vector<ContextFeature>> context_features(const Model& action_model, const Model& object_model,
                                                          std::span<const Scene> scenes, const EvalSettings& s,
                                                          GroundTruthScores* raw_out) {
    if (object_model.config.num_actions != kNumContextObjects) {
        throw ConfigError("context rescoring needs an object model with 4 classes");
    }
    // Raw scores of every person (actioned or not) for the "other instances" term.
    std::vector<std::vector<HeadOutputs>> person_outputs(scenes.size());
    std::vector<std::vector<ObjectDetection>> objects(scenes.size());
    parallel_for(scenes.size(), s.threads, [&](std::size_t i) {
        std::vector<Box> boxes;
        for (const auto& inst : scenes[i].instances) boxes.push_back(inst.box);
        person_outputs[i] = predict_regions(action_model, scenes[i].canvas, boxes, s.crop);
        objects[i] = detect_objects(object_model, scenes[i], s);
    });
    const std::size_t A = action_model.config.num_actions;
    GroundTruthScores raw;
    std::vector<std::vector<ContextFeature>> out;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        for (std::size_t j = 0; j < scenes[i].instances.size(); ++j) {
            if (!scenes[i].instances[j].action) continue;
            std::vector<std::vector<double>> others;
            for (std::size_t o = 0; o < scenes[i].instances.size(); ++o) {
                if (o != j) others.push_back(person_outputs[i][o].action_probs);
            }
            const auto& own = person_outputs[i][j].action_probs;
            std::vector<ContextFeature> per_action;
            for (std::size_t a = 0; a < A; ++a) {
                per_action.push_back(build_context_feature(scenes[i].instances[j].box, own[a], others, objects[i], A,
                                                           kNumContextObjects));
            }
            out.push_back(std::move(per_action));
            raw.boxes.push_back({*scenes[i].instances[j].action, own});
            raw.scene.push_back(i);
            raw.instance.push_back(j);
        }
    }
    if (raw_out) *raw_out = std::move(raw);
    return out;
}

std::vector<LinearSvm> train_context_svms(const Model& action_model, const Model& object_model,
                                          std::span<const Scene> scenes, const EvalSettings& s) {
    GroundTruthScores raw;
    const auto feats = context_features(action_model, object_model, scenes, s, &raw);
    const std::size_t A = action_model.config.num_actions;
    std::vector<LinearSvm> models(A);
    // Each action's SVM sees that action's own-score slot, so the design
    // matrix differs per column.
    for (std::size_t a = 0; a < A; ++a) {
        std::vector<std::vector<double>> x;
        std::vector<std::vector<bool>> pos;
        for (std::size_t b = 0; b < feats.size(); ++b) {
            x.push_back(feats[b][a].to_vector());
            pos.push_back({raw.boxes[b].true_action == a});
        }
        EvalSettings single = s;
        single.svm.seed = scene_seed(s.svm.seed, a);
        models[a] = train_svm_columns(x, pos, 1, single).front();
    }
    return models;
}

GroundTruthScores classify_ground_truth_context(const Model& action_model, const Model& object_model,
                                                const std::vector<LinearSvm>& svms, std::span<const Scene> scenes,
                                                const EvalSettings& s) {
    GroundTruthScores out;
    const auto feats = context_features(action_model, object_model, scenes, s, &out);
    const auto rescored = rescore_actions(feats, svms);
    for (std::size_t b = 0; b < out.boxes.size(); ++b) out.boxes[b].scores = rescored[b];
    return out;
}

std::vector<ScoredPrediction> action_detection_predictions(const Model& model, std::span<const Scene> scenes,
                                                           const EvalSettings& s, const std::vector<LinearSvm>* svms) {
    const auto outputs = proposal_outputs(model, scenes, s);
    std::vector<ScoredPrediction> preds;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        for (std::size_t r = 0; r < scenes[i].proposals.size(); ++r) {
            const auto& o = outputs[i][r];
            std::vector<double> scores;
            if (svms) {
                const auto f = o.feature(s.action_feature);
                for (const auto& m : *svms) scores.push_back(svm_score(m, f));
            } else {
                scores = score_action_detection(o, s.score_mode);
            }
            for (std::size_t a = 0; a < scores.size(); ++a) {
                preds.push_back({i, scores[a], BoxPayload{scenes[i].proposals[r], a}});
            }
        }
    }
    return non_max_suppression(preds, s.nms_threshold);
}

double mean_ap_present(const APResult& result) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t c = 0; c < result.ap.size(); ++c) {
        if (c < result.positives.size() && result.positives[c] > 0) {
            sum += result.ap[c];
            ++n;
        }
    }
    return n ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace mtr
