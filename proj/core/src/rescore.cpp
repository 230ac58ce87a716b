#include "mtr/rescore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "binary_io.hpp"
#include "mtr/checkpoint.hpp"

namespace mtr {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Mean hinge over the problem plus the rescaled regularizer; equals the
// primal objective divided by C * n.
double scaled_objective(std::span<const double> w, double b, std::span<const std::vector<double>> x,
                        std::span<const int> y, double lambda) {
    double hinge = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) hinge += std::max(0.0, 1.0 - y[i] * (dot(w, x[i]) + b));
    return 0.5 * lambda * dot(w, w) + hinge / static_cast<double>(x.size());
}

}  // namespace

double optimal_bias(std::span<const double> margins, std::span<const int> labels) {
    // Every kink raises the slope of the hinge sum by one, starting from
    // -(#positives); the sum is flat between the P-th and (P+1)-th kinks.
    std::vector<double> kinks(margins.size());
    std::size_t positives = 0;
    for (std::size_t i = 0; i < margins.size(); ++i) {
        if (labels[i] > 0) {
            kinks[i] = 1.0 - margins[i];
            ++positives;
        } else {
            kinks[i] = -1.0 - margins[i];
        }
    }
    if (positives == 0 || positives == margins.size()) throw std::invalid_argument("optimal_bias: need both labels");
    std::nth_element(kinks.begin(), kinks.begin() + static_cast<long>(positives), kinks.end());
    const double upper = kinks[positives];
    const double lower = *std::max_element(kinks.begin(), kinks.begin() + static_cast<long>(positives));
    return 0.5 * (lower + upper);
}

SvmTrainResult svm_train_traced(std::span<const std::vector<double>> features, std::span<const int> labels,
                                const SvmTrainConfig& cfg) {
    const std::size_t n = features.size();
    if (n == 0 || labels.size() != n) throw std::invalid_argument("svm_train: features and labels must match");
    if (!(cfg.C > 0.0)) throw std::invalid_argument("svm_train: C must be positive");
    if (cfg.iterations == 0) throw std::invalid_argument("svm_train: iteration budget must be positive");
    const std::size_t dim = features[0].size();
    bool has_pos = false, has_neg = false;
    for (std::size_t i = 0; i < n; ++i) {
        if (features[i].size() != dim) throw std::invalid_argument("svm_train: ragged feature vectors");
        if (labels[i] == 1) {
            has_pos = true;
        } else if (labels[i] == -1) {
            has_neg = true;
        } else {
            throw std::invalid_argument("svm_train: labels must be -1 or +1");
        }
    }
    if (!has_pos || !has_neg) throw std::invalid_argument("svm_train: single-class input");

    const double lambda = 1.0 / (cfg.C * static_cast<double>(n));
    const double radius = std::sqrt(2.0 / lambda);
    const bool full_batch = n <= cfg.batch_size;
    const std::size_t batch = full_batch ? n : cfg.batch_size;
    const std::size_t T = cfg.iterations;
    const std::size_t suffix_start = T / 2;
    const std::size_t checkpoint_every = std::max<std::size_t>(1, T / 20);

    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);

    std::vector<double> w(dim, 0.0), avg(dim, 0.0), grad(dim);
    std::size_t avg_count = 0;
    std::vector<std::size_t> idx(batch);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::vector<double> margins(batch);
    std::vector<int> batch_labels(batch);

    auto all_margins = [&](std::span<const double> wv) {
        std::vector<double> m(n);
        for (std::size_t i = 0; i < n; ++i) m[i] = dot(wv, features[i]);
        return m;
    };

    SvmTrainResult out;
    double best = std::numeric_limits<double>::infinity();
    auto consider = [&](std::span<const double> wv) {
        const auto m = all_margins(wv);
        const double b = optimal_bias(m, labels);
        const double obj = scaled_objective(wv, b, features, labels, lambda);
        if (obj < best) {
            best = obj;
            out.model.weights.assign(wv.begin(), wv.end());
            out.model.bias = b;
        }
        out.objective_trace.push_back(best * cfg.C * static_cast<double>(n));
    };

    for (std::size_t t = 1; t <= T; ++t) {
        if (!full_batch) {
            for (auto& i : idx) i = pick(rng);
        }
        bool both = false;
        for (std::size_t j = 0; j < batch; ++j) {
            margins[j] = dot(w, features[idx[j]]);
            batch_labels[j] = labels[idx[j]];
            both = both || batch_labels[j] != batch_labels[0];
        }
        const double b = both ? optimal_bias(margins, batch_labels) : 0.0;

        for (std::size_t d = 0; d < dim; ++d) grad[d] = lambda * w[d];
        const double inv_batch = 1.0 / static_cast<double>(batch);
        for (std::size_t j = 0; j < batch; ++j) {
            if (batch_labels[j] * (margins[j] + b) < 1.0) {
                const auto& x = features[idx[j]];
                const double coef = batch_labels[j] * inv_batch;
                for (std::size_t d = 0; d < dim; ++d) grad[d] -= coef * x[d];
            }
        }
        const double eta = 1.0 / (lambda * static_cast<double>(t));
        for (std::size_t d = 0; d < dim; ++d) w[d] -= eta * grad[d];
        const double norm = std::sqrt(dot(w, w));
        if (norm > radius) {
            for (auto& v : w) v *= radius / norm;
        }

        if (t > suffix_start) {
            ++avg_count;
            const double k = 1.0 / static_cast<double>(avg_count);
            for (std::size_t d = 0; d < dim; ++d) avg[d] += (w[d] - avg[d]) * k;
        }
        if (t % checkpoint_every == 0 || t == T) {
            consider(w);
            if (avg_count > 0) {
                out.objective_trace.pop_back();
                consider(avg);
            }
        }
    }
    out.model.C = cfg.C;
    out.model.seed = cfg.seed;
    return out;
}

LinearSvm svm_train(std::span<const std::vector<double>> features, std::span<const int> labels,
                    const SvmTrainConfig& cfg) {
    return svm_train_traced(features, labels, cfg).model;
}

double svm_score(const LinearSvm& model, std::span<const double> feature) {
    if (feature.size() != model.weights.size()) {
        throw std::invalid_argument("svm_score: feature dimension " + std::to_string(feature.size()) +
                                    " does not match model dimension " + std::to_string(model.weights.size()));
    }
    return dot(model.weights, feature) + model.bias;
}

double svm_objective(const LinearSvm& model, std::span<const std::vector<double>> features,
                     std::span<const int> labels) {
    double hinge = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) {
        hinge += std::max(0.0, 1.0 - labels[i] * svm_score(model, features[i]));
    }
    return 0.5 * dot(model.weights, model.weights) + model.C * hinge;
}

// --- model files --------------------------------------------------------------

namespace {
constexpr std::string_view kSvmMagic{"MTRSVM\0\0", 8};
}

std::string encode_svm_set(std::span<const LinearSvm> models) {
    detail::ByteWriter w;
    w.bytes(kSvmMagic);
    w.u32(kSvmFileVersion);
    w.u64(models.size());
    for (const auto& m : models) {
        w.u64(m.weights.size());
        for (double v : m.weights) w.f64(v);
        w.f64(m.bias);
        w.f64(m.C);
        w.u64(m.seed);
    }
    return w.data();
}

std::vector<LinearSvm> decode_svm_set(const std::string& bytes) {
    detail::ByteReader r(bytes);
    if (r.bytes(kSvmMagic.size()) != kSvmMagic) throw std::runtime_error("svm file: bad magic");
    if (const auto v = r.u32(); v != kSvmFileVersion) {
        throw std::runtime_error("svm file: unsupported version " + std::to_string(v));
    }
    std::vector<LinearSvm> models(r.u64());
    for (auto& m : models) {
        m.weights.resize(r.u64());
        for (auto& v : m.weights) v = r.f64();
        m.bias = r.f64();
        m.C = r.f64();
        m.seed = r.u64();
    }
    if (!r.at_end()) throw std::runtime_error("svm file: trailing bytes");
    return models;
}

void save_svm_set(const std::filesystem::path& path, std::span<const LinearSvm> models) {
    write_file_atomic(path, encode_svm_set(models));
}

std::vector<LinearSvm> load_svm_set(const std::filesystem::path& path) { return decode_svm_set(read_file(path)); }

// --- keypoint sets -------------------------------------------------------------

std::vector<KeypointSvmSet> build_keypoint_svm_sets(std::span<const KeypointRegion> regions,
                                                    const GroundTruthInstances& gts, double alpha) {
    std::vector<KeypointSvmSet> sets(kNumKeypoints);
    for (std::size_t r = 0; r < regions.size(); ++r) {
        const auto& region = regions[r];
        if (region.predicted.size() != kNumKeypoints) {
            throw std::invalid_argument("build_keypoint_svm_sets: expected 13 predicted keypoints");
        }
        const auto it = gts.find(region.image_id);
        for (std::size_t k = 0; k < kNumKeypoints; ++k) {
            bool correct = false;
            if (it != gts.end()) {
                for (const auto& inst : it->second) {
                    if (!inst.keypoints) continue;
                    const auto h = torso_height(*inst.keypoints);
                    const auto& g = (*inst.keypoints)[k];
                    if (!h || !g.visible) continue;
                    if (std::hypot(region.predicted[k].x - g.x, region.predicted[k].y - g.y) < alpha * *h) {
                        correct = true;
                        break;
                    }
                }
            }
            (correct ? sets[k].positives : sets[k].negatives).push_back(r);
        }
    }
    return sets;
}

// --- context ---------------------------------------------------------------------

std::vector<double> ContextFeature::to_vector() const {
    std::vector<double> v;
    v.reserve(1 + others_max.size() + object_max.size());
    v.push_back(own_score);
    v.insert(v.end(), others_max.begin(), others_max.end());
    v.insert(v.end(), object_max.begin(), object_max.end());
    return v;
}

ContextFeature build_context_feature(const Box& region, double own_score,
                                     std::span<const std::vector<double>> other_instance_scores,
                                     std::span<const ObjectDetection> objects, std::size_t num_actions,
                                     std::size_t num_objects) {
    ContextFeature f;
    f.own_score = own_score;
    f.others_max.assign(num_actions, 0.0);
    f.object_max.assign(num_objects, 0.0);
    std::vector<bool> seen_action(num_actions, false);
    for (const auto& s : other_instance_scores) {
        if (s.size() != num_actions) throw std::invalid_argument("build_context_feature: score vector size mismatch");
        for (std::size_t a = 0; a < num_actions; ++a) {
            f.others_max[a] = seen_action[a] ? std::max(f.others_max[a], s[a]) : s[a];
            seen_action[a] = true;
        }
    }
    std::vector<bool> seen_object(num_objects, false);
    for (const auto& o : objects) {
        if (o.object_class >= num_objects) throw std::invalid_argument("build_context_feature: bad object class");
        if (!(iou(o.box, region) > kContextObjectOverlap)) continue;
        auto& slot = f.object_max[o.object_class];
        slot = seen_object[o.object_class] ? std::max(slot, o.score) : o.score;
        seen_object[o.object_class] = true;
    }
    return f;
}

std::vector<std::vector<double>> rescore_actions(const std::vector<std::vector<ContextFeature>>& features,
                                                 std::span<const LinearSvm> per_action) {
    std::vector<std::vector<double>> out(features.size());
    for (std::size_t b = 0; b < features.size(); ++b) {
        if (features[b].size() != per_action.size()) {
            throw std::invalid_argument("rescore_actions: need one model per action");
        }
        out[b].resize(per_action.size());
        for (std::size_t a = 0; a < per_action.size(); ++a) {
            out[b][a] = svm_score(per_action[a], features[b][a].to_vector());
        }
    }
    return out;
}

}  // namespace mtr
