#pragma once

/**
 * @file garmnet/evaluation.hpp
 * @brief Garment error rates, per-class landmark AP (VOC all-points), mAP,
 *        the duplicate-rate diagnostic, and report serialisation.
 */

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "garmnet/dataset.hpp"
#include "garmnet/geometry.hpp"
#include "garmnet/image.hpp"
#include "garmnet/network.hpp"

namespace garmnet {

enum class MatchKind { box_iou, radius };

/// How a predicted landmark is matched to a ground-truth one, and how garment boxes are judged.
struct MatchRule {
    MatchKind kind = MatchKind::box_iou;
    double box_side = 26.0;
    double landmark_iou = 0.5;
    double radius = 13.0;
    double garment_iou = 0.5;

    /// Overlap score (higher is better) and whether it clears the rule.
    std::pair<double, bool> score(Point pred, Point truth) const {
        if (kind == MatchKind::box_iou) {
            const double v = iou(landmark_to_box(pred, box_side), landmark_to_box(truth, box_side));
            return {v, v >= landmark_iou};
        }
        const double d = std::hypot(pred.x - truth.x, pred.y - truth.y);
        return {-d, d <= radius};
    }

    std::string describe() const {
        std::ostringstream os;
        if (kind == MatchKind::box_iou)
            os << "box-iou>=" << landmark_iou << " (side " << box_side << ")";
        else
            os << "radius<=" << radius;
        return os.str();
    }

    nlohmann::json to_json() const {
        return {{"landmark_rule", kind == MatchKind::box_iou ? "box_iou" : "radius"},
                {"box_side", box_side},
                {"landmark_iou", landmark_iou},
                {"radius", radius},
                {"garment_iou", garment_iou}};
    }
};

struct ScoredLandmark {
    std::size_t example = 0;
    int class_id = 0;
    Point point;
    double confidence = 0.0;
};

struct GarmentTruth {
    int class_id = 0;
    Box box;
};

struct ErrorRates {
    double classification = 0.0;       // percent
    double classification_localization = 0.0;
};

inline ErrorRates garment_error_rates(const std::vector<GarmentPrediction>& preds, const std::vector<GarmentTruth>& truth,
                                      double iou_thresh = 0.5) {
    if (preds.size() != truth.size())
        throw std::invalid_argument("garment_error_rates: " + std::to_string(preds.size()) + " predictions for " +
                                    std::to_string(truth.size()) + " examples");
    if (preds.empty()) return {};
    std::size_t wrong = 0, wrong_or_off = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const bool cls_ok = preds[i].class_id == truth[i].class_id;
        const bool loc_ok = iou(preds[i].box, truth[i].box) >= iou_thresh;
        wrong += !cls_ok;
        wrong_or_off += !(cls_ok && loc_ok);
    }
    const double n = double(preds.size());
    return {100.0 * wrong / n, 100.0 * wrong_or_off / n};
}

/**
 * VOC all-points average precision for one landmark class.
 *
 * Predictions are visited by descending confidence (stable on ties). Each is
 * compared with the ground-truth landmarks of its class in the same example;
 * the best-scoring one is a true positive if it clears the rule and is still
 * unmatched, otherwise the prediction is a false positive. Returns nullopt
 * when the class has no ground-truth instance.
 */
inline std::optional<double> average_precision(int class_id, const std::vector<ScoredLandmark>& preds,
                                               const std::vector<std::vector<LandmarkAnnotation>>& truth,
                                               const MatchRule& rule) {
    std::vector<std::vector<std::size_t>> gt(truth.size());
    std::size_t npos = 0;
    for (std::size_t e = 0; e < truth.size(); ++e)
        for (std::size_t k = 0; k < truth[e].size(); ++k)
            if (truth[e][k].class_id == class_id) {
                gt[e].push_back(k);
                ++npos;
            }
    if (npos == 0) return std::nullopt;

    std::vector<const ScoredLandmark*> order;
    for (const auto& p : preds)
        if (p.class_id == class_id) order.push_back(&p);
    std::stable_sort(order.begin(), order.end(),
                     [](const ScoredLandmark* a, const ScoredLandmark* b) { return a->confidence > b->confidence; });

    std::vector<std::vector<std::uint8_t>> used(truth.size());
    for (std::size_t e = 0; e < truth.size(); ++e) used[e].assign(gt[e].size(), 0);

    std::vector<double> rec, prec;
    std::size_t tp = 0, fp = 0;
    for (const ScoredLandmark* p : order) {
        if (p->example >= truth.size()) throw std::invalid_argument("average_precision: example index out of range");
        int best = -1;
        double best_score = -std::numeric_limits<double>::infinity();
        bool best_ok = false;
        for (std::size_t g = 0; g < gt[p->example].size(); ++g) {
            const auto [s, ok] = rule.score(p->point, truth[p->example][gt[p->example][g]].point);
            if (s > best_score) {
                best_score = s;
                best = int(g);
                best_ok = ok;
            }
        }
        if (best >= 0 && best_ok && !used[p->example][std::size_t(best)]) {
            used[p->example][std::size_t(best)] = 1;
            ++tp;
        } else {
            ++fp;
        }
        rec.push_back(double(tp) / double(npos));
        prec.push_back(double(tp) / double(tp + fp));
    }

    std::vector<double> mrec{0.0}, mpre{0.0};
    mrec.insert(mrec.end(), rec.begin(), rec.end());
    mpre.insert(mpre.end(), prec.begin(), prec.end());
    mrec.push_back(1.0);
    mpre.push_back(0.0);
    for (std::size_t i = mpre.size() - 1; i-- > 0;) mpre[i] = std::max(mpre[i], mpre[i + 1]);
    double ap = 0.0;
    for (std::size_t i = 1; i < mrec.size(); ++i)
        if (mrec[i] != mrec[i - 1]) ap += (mrec[i] - mrec[i - 1]) * mpre[i];
    return ap;
}

/// Mean of the defined APs, in percent. Undefined classes are skipped.
inline double mean_ap(const std::vector<std::optional<double>>& aps) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& a : aps)
        if (a) {
            sum += *a;
            ++n;
        }
    return n ? 100.0 * sum / double(n) : 0.0;
}

inline double mean_ap(const std::vector<double>& aps) {
    return mean_ap(std::vector<std::optional<double>>(aps.begin(), aps.end()));
}

/// Mean number of predictions per (example, ground-truth class) pair.
inline double duplicate_rate(const std::vector<std::vector<LandmarkPrediction>>& preds,
                             const std::vector<std::vector<LandmarkAnnotation>>& truth) {
    if (preds.size() != truth.size()) throw std::invalid_argument("duplicate_rate: size mismatch");
    std::size_t pairs = 0, count = 0;
    for (std::size_t e = 0; e < truth.size(); ++e)
        for (const auto& g : truth[e]) {
            ++pairs;
            count += std::size_t(std::count_if(preds[e].begin(), preds[e].end(),
                                               [&](const LandmarkPrediction& p) { return p.class_id == g.class_id; }));
        }
    return pairs ? double(count) / double(pairs) : 0.0;
}

struct EvalReport {
    std::size_t n_examples = 0;
    double garment_classification_error = 0.0;
    double garment_cls_loc_error = 0.0;
    std::vector<std::optional<double>> per_class_ap;  // nullopt: no instances in this split
    std::vector<std::size_t> instances;
    double mean_ap = 0.0;
    double duplicate_rate = 0.0;
    MatchRule rule;
    std::string interpolation = "voc-all-points";
    std::vector<std::string> landmark_names;

    nlohmann::json to_json() const {
        nlohmann::json ap = nlohmann::json::array(), excluded = nlohmann::json::array();
        for (std::size_t c = 0; c < per_class_ap.size(); ++c) {
            const std::string name = c < landmark_names.size() ? landmark_names[c] : std::to_string(c);
            nlohmann::json row{{"class", name}, {"id", c}, {"instances", instances[c]}};
            row["ap"] = per_class_ap[c] ? nlohmann::json(100.0 * *per_class_ap[c]) : nlohmann::json(nullptr);
            ap.push_back(row);
            if (!per_class_ap[c]) excluded.push_back(name);
        }
        return {{"n_examples", n_examples},
                {"garment_classification_error", garment_classification_error},
                {"garment_cls_loc_error", garment_cls_loc_error},
                {"mean_ap", mean_ap},
                {"per_class_ap", ap},
                {"excluded_classes", excluded},
                {"duplicate_rate", duplicate_rate},
                {"match_rule", rule.to_json()},
                {"interpolation", interpolation}};
    }

    /// Aligned text mirroring the error-rate and per-class AP tables.
    std::string to_table() const {
        std::ostringstream os;
        os << std::fixed << std::setprecision(1);
        os << "Garment perception (" << n_examples << " examples, box IoU >= " << rule.garment_iou << ")\n";
        os << "  " << std::left << std::setw(22) << "" << std::setw(16) << "Classification" << "Classif.+Loca.\n";
        os << "  " << std::setw(22) << "error rate" << std::setw(16)
           << (fmt_pct(garment_classification_error)) << fmt_pct(garment_cls_loc_error) << "\n\n";
        os << "Landmark detection (" << rule.describe() << ", " << interpolation << ")\n";
        os << "  " << std::setw(22) << "class" << std::right << std::setw(8) << "AP" << std::setw(11) << "instances\n";
        for (std::size_t c = 0; c < per_class_ap.size(); ++c) {
            const std::string name = c < landmark_names.size() ? landmark_names[c] : std::to_string(c);
            os << "  " << std::left << std::setw(22) << name << std::right << std::setw(8);
            if (per_class_ap[c])
                os << 100.0 * *per_class_ap[c];
            else
                os << "-";
            os << std::setw(10) << instances[c] << "\n";
        }
        os << "  " << std::left << std::setw(22) << "mean AP" << std::right << std::setw(8) << mean_ap << "\n";
        os << std::setprecision(3) << "  " << std::left << std::setw(22) << "duplicate rate" << std::right
           << std::setw(8) << duplicate_rate << "\n";
        return os.str();
    }

private:
    static std::string fmt_pct(double v) {
        std::ostringstream os;
        os << std::fixed << std::setprecision(1) << v << "%";
        return os.str();
    }
};

/// Score prediction sets against examples; everything in network input coordinates.
inline EvalReport evaluate_predictions(const std::vector<PredictionSet>& preds, const std::vector<Example>& examples,
                                       const MatchRule& rule, int n_landmarks,
                                       const std::vector<std::string>& landmark_names = {}) {
    if (preds.size() != examples.size()) throw std::invalid_argument("evaluate_predictions: size mismatch");
    EvalReport r;
    r.n_examples = examples.size();
    r.rule = rule;
    r.landmark_names = landmark_names;

    std::vector<GarmentPrediction> gp;
    std::vector<GarmentTruth> gt;
    std::vector<std::vector<LandmarkAnnotation>> truth;
    std::vector<std::vector<LandmarkPrediction>> lm;
    std::vector<ScoredLandmark> scored;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        gp.push_back(preds[i].garment);
        gt.push_back({examples[i].garment_class, examples[i].garment_box});
        truth.push_back(examples[i].landmarks);
        lm.push_back(preds[i].landmarks);
        for (const auto& p : preds[i].landmarks) scored.push_back({i, p.class_id, p.point, p.confidence});
    }
    const ErrorRates er = garment_error_rates(gp, gt, rule.garment_iou);
    r.garment_classification_error = er.classification;
    r.garment_cls_loc_error = er.classification_localization;
    r.instances.assign(std::size_t(n_landmarks), 0);
    for (const auto& t : truth)
        for (const auto& l : t)
            if (l.class_id >= 0 && l.class_id < n_landmarks) ++r.instances[std::size_t(l.class_id)];
    for (int c = 0; c < n_landmarks; ++c) r.per_class_ap.push_back(average_precision(c, scored, truth, rule));
    r.mean_ap = mean_ap(r.per_class_ap);
    r.duplicate_rate = duplicate_rate(lm, truth);
    return r;
}

template <typename T>
std::vector<PredictionSet> predict_all(const GarmNet<T>& model, const std::vector<Example>& examples) {
    std::vector<PredictionSet> out;
    out.reserve(examples.size());
    const auto& bc = model.config().backbone;
    for (const auto& e : examples) out.push_back(model.predict(image_to_tensor<T>(e.image, bc.mean, bc.std)));
    return out;
}

template <typename T>
EvalReport evaluate_model(const GarmNet<T>& model, const std::vector<Example>& examples, MatchRule rule,
                          const std::vector<std::string>& landmark_names = {}) {
    return evaluate_predictions(predict_all(model, examples), examples, rule, model.config().n_landmarks,
                                landmark_names);
}

}  // namespace garmnet
