#include "camogen/metrics.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "camogen/image_io.hpp"

namespace camogen::metrics {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr real kEps = 2.2204460492503131e-16;

void check_pair(const PredictionPair& p) {
    if (p.pred.rank() != 2 || p.gt.rank() != 2 || !p.pred.same_shape(p.gt))
        throw std::invalid_argument("metric: pred/gt must be (H,W) with equal shapes");
}

real mean_of(const Tensor& t) {
    real s = 0;
    for (int64_t i = 0; i < t.numel(); ++i) s += t[i];
    return s / static_cast<real>(t.numel());
}

}  // namespace

PredictionPair make_pair(Tensor pred, Tensor gt, std::string name) {
    if (pred.rank() != 2 || gt.rank() != 2 || !pred.same_shape(gt))
        throw std::invalid_argument("make_pair: pred/gt must be (H,W) with equal shapes");
    PredictionPair p;
    p.pred = Tensor(pred.shape());
    for (int64_t i = 0; i < pred.numel(); ++i)
        p.pred[i] = std::min(real(1), std::max(real(0), pred[i]));
    p.gt = Tensor(gt.shape());
    for (int64_t i = 0; i < gt.numel(); ++i) p.gt[i] = gt[i] > 0.5 ? 1.0 : 0.0;
    p.name = std::move(name);
    return p;
}

real mae(const PredictionPair& pair) {
    check_pair(pair);
    real s = 0;
    for (int64_t i = 0; i < pair.pred.numel(); ++i) s += std::abs(pair.pred[i] - pair.gt[i]);
    return s / static_cast<real>(pair.pred.numel());
}

// --- structure measure -------------------------------------------------------

namespace {

// 2*mean / (mean^2 + 1 + std) similarity of a masked prediction region
real object_similarity(const Tensor& pred, const Tensor& gt, bool foreground) {
    int64_t n = 0;
    real sum = 0;
    for (int64_t i = 0; i < gt.numel(); ++i) {
        bool in = foreground ? gt[i] == 1.0 : gt[i] == 0.0;
        if (!in) continue;
        real v = foreground ? pred[i] : 1.0 - pred[i];
        sum += v;
        ++n;
    }
    if (n == 0) return 0.0;
    real m = sum / static_cast<real>(n);
    real ss = 0;
    for (int64_t i = 0; i < gt.numel(); ++i) {
        bool in = foreground ? gt[i] == 1.0 : gt[i] == 0.0;
        if (!in) continue;
        real v = foreground ? pred[i] : 1.0 - pred[i];
        ss += (v - m) * (v - m);
    }
    real sd = std::sqrt(ss / (static_cast<real>(n) - 1.0 + kEps));
    return 2.0 * m / (m * m + 1.0 + sd + kEps);
}

real region_similarity(const Tensor& pred, const Tensor& gt, int y0, int y1, int x0, int x1) {
    const int64_t n = static_cast<int64_t>(y1 - y0) * (x1 - x0);
    real pm = 0, gm = 0;
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
            pm += pred.at(y, x);
            gm += gt.at(y, x);
        }
    pm /= static_cast<real>(n);
    gm /= static_cast<real>(n);
    real sp2 = 0, sg2 = 0, spg = 0;
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
            real dp = pred.at(y, x) - pm, dg = gt.at(y, x) - gm;
            sp2 += dp * dp;
            sg2 += dg * dg;
            spg += dp * dg;
        }
    const real denom = static_cast<real>(n) - 1.0 + kEps;
    sp2 /= denom;
    sg2 /= denom;
    spg /= denom;
    real aa = 4.0 * pm * gm * spg;
    real bb = (pm * pm + gm * gm) * (sp2 + sg2);
    if (aa != 0.0) return aa / (bb + kEps);
    return bb == 0.0 ? 1.0 : 0.0;
}

}  // namespace

real s_measure(const PredictionPair& pair, real alpha) {
    check_pair(pair);
    const Tensor& pred = pair.pred;
    const Tensor& gt = pair.gt;
    const int H = gt.dim(0), W = gt.dim(1);
    real gt_mean = mean_of(gt);
    if (gt_mean == 0.0) return 1.0 - mean_of(pred);
    if (gt_mean == 1.0) return mean_of(pred);

    real s_obj = gt_mean * object_similarity(pred, gt, true) +
                 (1.0 - gt_mean) * object_similarity(pred, gt, false);

    // centroid in 1-based coordinates, rounded half away from zero
    real total = 0, cx = 0, cy = 0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            real v = gt.at(y, x);
            total += v;
            cx += v * (x + 1);
            cy += v * (y + 1);
        }
    int X = static_cast<int>(std::round(cx / total));
    int Y = static_cast<int>(std::round(cy / total));

    const real area = static_cast<real>(H) * W;
    struct Quad {
        int y0, y1, x0, x1;
        real w;
    };
    real w1 = static_cast<real>(X) * Y / area;
    real w2 = static_cast<real>(W - X) * Y / area;
    real w3 = static_cast<real>(X) * (H - Y) / area;
    real w4 = 1.0 - w1 - w2 - w3;
    Quad quads[4] = {{0, Y, 0, X, w1}, {0, Y, X, W, w2}, {Y, H, 0, X, w3}, {Y, H, X, W, w4}};
    real s_reg = 0;
    for (const Quad& q : quads) {
        if (q.y1 <= q.y0 || q.x1 <= q.x0) continue;  // zero-area quadrant
        s_reg += q.w * region_similarity(pred, gt, q.y0, q.y1, q.x0, q.x1);
    }

    real s = alpha * s_obj + (1.0 - alpha) * s_reg;
    return std::max(real(0), s);
}

// --- enhanced-alignment measure ------------------------------------------------

real e_measure(const PredictionPair& pair) {
    check_pair(pair);
    const Tensor& pred = pair.pred;
    const Tensor& gt = pair.gt;
    real gt_mean = mean_of(gt);
    if (gt_mean == 0.0) return 1.0 - mean_of(pred);
    if (gt_mean == 1.0) return mean_of(pred);
    real pred_mean = mean_of(pred);
    real score = 0;
    for (int64_t i = 0; i < gt.numel(); ++i) {
        real pg = gt[i] - gt_mean;
        real pp = pred[i] - pred_mean;
        real xi = 2.0 * pg * pp / (pg * pg + pp * pp + kEps);
        score += (1.0 + xi) * (1.0 + xi) / 4.0;
    }
    return score / static_cast<real>(gt.numel());
}

// --- weighted F-measure -----------------------------------------------------------

namespace {

// Exact squared Euclidean distance to the nearest foreground pixel plus the
// error value carried from there (minimum across distance ties). Column pass
// finds each row's nearest in-column site; the row pass scans columns
// outward with pruning.
void foreground_distance(const Tensor& gt, const Tensor& err, std::vector<real>& dist2,
                         std::vector<real>& carried) {
    const int H = gt.dim(0), W = gt.dim(1);
    const real INF = std::numeric_limits<real>::infinity();
    std::vector<real> cd2(static_cast<size_t>(H) * W, INF);
    std::vector<real> ce(static_cast<size_t>(H) * W, INF);

    for (int x = 0; x < W; ++x) {
        std::vector<int> sites;
        for (int y = 0; y < H; ++y)
            if (gt.at(y, x) == 1.0) sites.push_back(y);
        if (sites.empty()) continue;
        size_t j = 0;
        for (int y = 0; y < H; ++y) {
            while (j + 1 < sites.size() &&
                   std::abs(sites[j + 1] - y) <= std::abs(sites[j] - y))
                ++j;
            int d = sites[j] - y;
            real best = static_cast<real>(d) * d;
            real e = err.at(sites[j], x);
            // the previous site can tie at equal distance
            if (j > 0) {
                int dp = sites[j - 1] - y;
                if (static_cast<real>(dp) * dp == best) e = std::min(e, err.at(sites[j - 1], x));
            }
            cd2[static_cast<size_t>(y) * W + x] = best;
            ce[static_cast<size_t>(y) * W + x] = e;
        }
    }

    dist2.assign(static_cast<size_t>(H) * W, INF);
    carried.assign(static_cast<size_t>(H) * W, 0.0);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            real best = INF, beste = INF;
            for (int dc = 0; dc < W; ++dc) {
                real dc2 = static_cast<real>(dc) * dc;
                if (dc2 > best) break;
                for (int sgn = 0; sgn < (dc == 0 ? 1 : 2); ++sgn) {
                    int cx = sgn == 0 ? x - dc : x + dc;
                    if (cx < 0 || cx >= W) continue;
                    real base = cd2[static_cast<size_t>(y) * W + cx];
                    if (base == INF) continue;
                    real cand = base + dc2;
                    if (cand < best) {
                        best = cand;
                        beste = ce[static_cast<size_t>(y) * W + cx];
                    } else if (cand == best) {
                        beste = std::min(beste, ce[static_cast<size_t>(y) * W + cx]);
                    }
                }
            }
            dist2[static_cast<size_t>(y) * W + x] = best;
            carried[static_cast<size_t>(y) * W + x] = beste;
        }
}

}  // namespace

real weighted_f_measure(const PredictionPair& pair, bool* empty_gt_warning) {
    check_pair(pair);
    if (empty_gt_warning) *empty_gt_warning = false;
    const Tensor& pred = pair.pred;
    const Tensor& gt = pair.gt;
    const int H = gt.dim(0), W = gt.dim(1);
    const int64_t n = gt.numel();

    real fg_count = 0;
    for (int64_t i = 0; i < n; ++i) fg_count += gt[i];
    if (fg_count == 0) {
        if (empty_gt_warning) *empty_gt_warning = true;
        return 0.0;
    }

    Tensor E({H, W});
    for (int64_t i = 0; i < n; ++i) E[i] = std::abs(pred[i] - gt[i]);

    std::vector<real> dist2, carried;
    foreground_distance(gt, E, dist2, carried);

    // Et: foreground keeps its own error, background takes the carried one
    Tensor Et({H, W});
    for (int64_t i = 0; i < n; ++i) Et[i] = gt[i] == 1.0 ? E[i] : carried[i];

    // 7x7 Gaussian, sigma 5, zero-padded correlation
    real kern[7][7];
    real ksum = 0;
    for (int u = 0; u < 7; ++u)
        for (int v = 0; v < 7; ++v) {
            real du = u - 3, dv = v - 3;
            kern[u][v] = std::exp(-(du * du + dv * dv) / (2.0 * 25.0));
            ksum += kern[u][v];
        }
    for (auto& row : kern)
        for (real& k : row) k /= ksum;

    Tensor EA({H, W});
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            real s = 0;
            for (int u = 0; u < 7; ++u)
                for (int v = 0; v < 7; ++v) {
                    int sy = y + u - 3, sx = x + v - 3;
                    if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
                    s += Et.at(sy, sx) * kern[u][v];
                }
            EA.at(y, x) = s;
        }

    const real decay = std::log(0.5) / 5.0;
    real ew_fg_sum = 0, ew_bg_sum = 0;
    for (int64_t i = 0; i < n; ++i) {
        real min_e_ea = E[i];
        real b = 1.0;
        if (gt[i] == 1.0) {
            if (EA[i] < E[i]) min_e_ea = EA[i];
        } else {
            b = 2.0 - std::exp(decay * std::sqrt(dist2[static_cast<size_t>(i)]));
        }
        real ew = min_e_ea * b;
        if (gt[i] == 1.0)
            ew_fg_sum += ew;
        else
            ew_bg_sum += ew;
    }

    real tpw = fg_count - ew_fg_sum;
    real fpw = ew_bg_sum;
    real recall = 1.0 - ew_fg_sum / fg_count;
    real precision = tpw / (kEps + tpw + fpw);
    return 2.0 * recall * precision / (kEps + recall + precision);
}

// --- directory evaluation -----------------------------------------------------------

json MetricReport::to_json() const {
    json j;
    j["count"] = count;
    j["means"] = {{"S", mean_s}, {"E", mean_e}, {"Fw", mean_fw}, {"MAE", mean_mae}};
    j["empty_gt_warnings"] = empty_gt_warnings;
    j["per_image"] = json::array();
    for (const auto& r : per_image)
        j["per_image"].push_back(
            {{"name", r.name}, {"S", r.S}, {"E", r.E}, {"Fw", r.Fw}, {"MAE", r.MAE}});
    return j;
}

std::string MetricReport::to_table() const {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof(line), "%-32s %8s %8s %8s %8s\n", "name", "S_a", "E_phi", "F_w",
                  "MAE");
    os << line;
    for (const auto& r : per_image) {
        std::snprintf(line, sizeof(line), "%-32s %8.4f %8.4f %8.4f %8.4f\n", r.name.c_str(), r.S,
                      r.E, r.Fw, r.MAE);
        os << line;
    }
    std::snprintf(line, sizeof(line), "%-32s %8.4f %8.4f %8.4f %8.4f\n", "mean", mean_s, mean_e,
                  mean_fw, mean_mae);
    os << line;
    return os.str();
}

void MetricReport::save(const fs::path& file) const {
    std::ofstream os(file);
    if (!os) throw std::runtime_error("cannot write report: " + file.string());
    os << to_json().dump(2) << "\n";
}

MetricReport evaluate_directory(const fs::path& pred_dir, const fs::path& gt_dir) {
    if (!fs::is_directory(pred_dir))
        throw std::runtime_error("missing directory: " + pred_dir.string());
    if (!fs::is_directory(gt_dir))
        throw std::runtime_error("missing directory: " + gt_dir.string());
    auto list_images = [](const fs::path& dir) {
        std::map<std::string, fs::path> out;
        for (const auto& e : fs::directory_iterator(dir)) {
            if (!e.is_regular_file()) continue;
            std::string ext = e.path().extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(),
                           [](unsigned char c) { return std::tolower(c); });
            if (ext == ".png" || ext == ".jpg" || ext == ".jpeg")
                out[e.path().stem().string()] = e.path();
        }
        return out;
    };
    auto preds = list_images(pred_dir);
    auto gts = list_images(gt_dir);
    for (const auto& [stem, p] : preds)
        if (!gts.count(stem)) throw std::runtime_error("unpaired prediction: " + p.string());
    for (const auto& [stem, p] : gts)
        if (!preds.count(stem)) throw std::runtime_error("unpaired ground truth: " + p.string());
    if (preds.empty())
        throw std::runtime_error("no prediction/ground-truth pairs to evaluate");

    std::vector<std::pair<fs::path, fs::path>> jobs;
    for (const auto& [stem, p] : preds) jobs.emplace_back(p, gts.at(stem));

    MetricReport report;
    report.per_image.resize(jobs.size());
    std::vector<int> warns(jobs.size(), 0);
    std::exception_ptr err;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int64_t i = 0; i < static_cast<int64_t>(jobs.size()); ++i) {
        try {
            Tensor pred3 = img::load_gray(jobs[static_cast<size_t>(i)].first);
            Tensor gt3 = img::load_gray(jobs[static_cast<size_t>(i)].second);
            if (pred3.dim(1) != gt3.dim(1) || pred3.dim(2) != gt3.dim(2))
                pred3 = img::resize_bilinear(pred3, gt3.dim(1), gt3.dim(2));
            const int H = gt3.dim(1), W = gt3.dim(2);
            Tensor pred({H, W}), gt({H, W});
            for (int64_t t = 0; t < pred.numel(); ++t) {
                pred[t] = pred3[t];
                gt[t] = gt3[t];
            }
            auto pair = make_pair(std::move(pred), std::move(gt),
                                  jobs[static_cast<size_t>(i)].first.stem().string());
            MetricRow row;
            row.name = pair.name;
            row.MAE = mae(pair);
            row.S = s_measure(pair);
            row.E = e_measure(pair);
            bool warn = false;
            row.Fw = weighted_f_measure(pair, &warn);
            warns[static_cast<size_t>(i)] = warn ? 1 : 0;
            report.per_image[static_cast<size_t>(i)] = std::move(row);
        } catch (...) {
#ifdef _OPENMP
#pragma omp critical
#endif
            if (!err) err = std::current_exception();
        }
    }
    if (err) std::rethrow_exception(err);

    report.count = static_cast<int>(report.per_image.size());
    for (int w : warns) report.empty_gt_warnings += w;
    if (report.empty_gt_warnings > 0)
        std::cerr << "warning: " << report.empty_gt_warnings
                  << " ground-truth mask(s) have no foreground; their Fw is defined as 0\n";
    for (const auto& r : report.per_image) {
        report.mean_s += r.S;
        report.mean_e += r.E;
        report.mean_fw += r.Fw;
        report.mean_mae += r.MAE;
    }
    report.mean_s /= report.count;
    report.mean_e /= report.count;
    report.mean_fw /= report.count;
    report.mean_mae /= report.count;
    return report;
}

}  // namespace camogen::metrics
