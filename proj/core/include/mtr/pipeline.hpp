#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mtr/eval.hpp"
#include "mtr/losses.hpp"
#include "mtr/network.hpp"
#include "mtr/rescore.hpp"
#include "mtr/synthdata.hpp"

namespace mtr {

struct Preset {
    std::string_view name;
    TaskWeights weights;
};

inline constexpr std::array<Preset, 5> kPresets = {{
    {"pose", {0.0, 1.0, 0.0}},
    {"action", {0.0, 0.0, 1.0}},
    {"detection", {1.0, 0.0, 0.0}},
    {"detection-action", {1.0, 0.0, 1.0}},
    {"detection-pose-action", {1.0, 1.0, 2.0}},
}};

std::optional<TaskWeights> preset_weights(std::string_view name);

/// What the regions are labeled against: people (with keypoints and actions)
/// or context objects (object class in place of the action).
enum class RegionTargets : std::uint8_t { Persons = 0, Objects = 1 };

struct RegionOptions {
    std::size_t crop = 24;
    std::size_t jitter_per_instance = 8;
    double jitter_min_iou = 0.7;
    bool jitter_for_detection = true;  // false marks jittered regions as detection-ignore
    bool include_gt_boxes = true;
    RegionTargets targets = RegionTargets::Persons;
    std::uint64_t seed = 0;
};

/// Context objects as instances: no keypoints, object class as the label.
std::vector<Instance> object_instances(const Scene& scene);
/// Proposals around the scene's context objects plus background boxes.
std::vector<Box> object_proposals(const Scene& scene);

/// Labeled regions over a set of scenes; tensors are rendered on demand.
class SceneRegions final : public RegionSource {
public:
    SceneRegions(std::span<const Scene> scenes, const RegionOptions& opts);

    std::size_t size() const override { return samples_.size(); }
    const RegionSample& sample(std::size_t i) const override { return samples_.at(i); }
    void render(std::size_t i, std::span<double> out) const override;
    std::size_t scene_of(std::size_t i) const { return scene_of_.at(i); }

private:
    std::span<const Scene> scenes_;
    RegionOptions opts_;
    std::vector<std::size_t> scene_of_;
    std::vector<RegionSample> samples_;
};

struct Model {
    NetworkConfig config;
    TaskWeights weights;
    NetworkParams params;
};

struct TrainSetup {
    NetworkConfig net;
    TrainConfig train;
    RegionOptions regions;
};

/// Defaults tuned for the synthetic scenes: heads without a detection term
/// draw every minibatch sample from labeled foreground regions.
TrainSetup default_setup(const TaskWeights& weights, std::uint64_t seed = 0,
                         RegionTargets targets = RegionTargets::Persons);

TrainResult train_on_scenes(std::span<const Scene> scenes, const TrainSetup& setup,
                            std::optional<TrainState> resume = std::nullopt);
Model train_model(std::span<const Scene> scenes, const TrainSetup& setup);

std::vector<HeadOutputs> predict_regions(const Model& model, const Canvas& canvas, std::span<const Box> boxes,
                                         std::size_t crop = 24);

struct EvalSettings {
    std::size_t crop = 24;
    double nms_threshold = 0.3;
    EvalOptions metric;
    FeatureLayer action_feature = FeatureLayer::Fc6;
    FeatureLayer keypoint_feature = FeatureLayer::Fc7;
    SvmTrainConfig svm;
    ActionScoreMode score_mode = ActionScoreMode::Product;
    std::size_t threads = 1;
};

// Image ids in everything below are indices into the scene span.
GroundTruthBoxes person_ground_truth(std::span<const Scene> scenes);
GroundTruthInstances instance_ground_truth(std::span<const Scene> scenes);

/// Scenes with even / odd positions; rescoring models are fit on one half
/// of a split and scored on the other.
std::vector<Scene> even_scenes(std::span<const Scene> scenes);
std::vector<Scene> odd_scenes(std::span<const Scene> scenes);

// --- person detection -------------------------------------------------------
std::vector<ScoredPrediction> detection_predictions(const Model& model, std::span<const Scene> scenes,
                                                    const EvalSettings& s);

// --- keypoints --------------------------------------------------------------
/// One SVM per keypoint type on region features, positives being regions
/// whose prediction for that keypoint is APK-correct.
std::vector<LinearSvm> train_keypoint_svms(const Model& model, std::span<const Scene> scenes, const EvalSettings& s);
/// Keypoint predictions from every proposal, scored by the keypoint SVMs
/// (or by the person probability without them), de-duplicated per keypoint
/// by NMS over the region boxes.
std::vector<ScoredPrediction> keypoint_predictions(const Model& model, std::span<const Scene> scenes,
                                                   const EvalSettings& s,
                                                   const std::vector<LinearSvm>* svms = nullptr);

// --- action classification on ground-truth boxes ---------------------------
struct GroundTruthScores {
    std::vector<ClassifiedBox> boxes;
    std::vector<std::size_t> scene;     // per box
    std::vector<std::size_t> instance;  // per box, index within the scene
};

GroundTruthScores classify_ground_truth(const Model& model, std::span<const Scene> scenes, const EvalSettings& s);
/// One-vs-rest SVMs on features of the actioned ground-truth boxes.
std::vector<LinearSvm> train_action_svms(const Model& model, std::span<const Scene> scenes, const EvalSettings& s);
GroundTruthScores classify_ground_truth_svm(const Model& model, const std::vector<LinearSvm>& svms,
                                            std::span<const Scene> scenes, const EvalSettings& s);
/// Scores for ground-truth boxes taken from box predictions (action label,
/// score) matched to the person they overlap most at IoU > 0.5.
GroundTruthScores classify_from_predictions(std::span<const ScoredPrediction> preds, std::span<const Scene> scenes);

/// Object detections (class score p1 * p_class) after per-class NMS.
std::vector<ObjectDetection> detect_objects(const Model& object_model, const Scene& scene, const EvalSettings& s);
/// Context features for every actioned ground-truth box: [box][action].
std::vector<std::vector<ContextFeature>> context_features(const Model& action_model, const Model& object_model,
                                                          std::span<const Scene> scenes, const EvalSettings& s,
                                                          GroundTruthScores* raw = nullptr);
std::vector<LinearSvm> train_context_svms(const Model& action_model, const Model& object_model,
                                          std::span<const Scene> scenes, const EvalSettings& s);
GroundTruthScores classify_ground_truth_context(const Model& action_model, const Model& object_model,
                                                const std::vector<LinearSvm>& svms, std::span<const Scene> scenes,
                                                const EvalSettings& s);

// --- action detection -------------------------------------------------------
/// (person, action) predictions over all proposals: network scores (product
/// or action-only) or, with svms, the per-action SVM margins. Per-action NMS.
std::vector<ScoredPrediction> action_detection_predictions(const Model& model, std::span<const Scene> scenes,
                                                           const EvalSettings& s,
                                                           const std::vector<LinearSvm>* svms = nullptr);

/// Mean AP over the classes that have at least one positive.
double mean_ap_present(const APResult& result);

}  // namespace mtr
