#include "camogen/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cmath>
#include <stdexcept>

namespace camogen::img {

namespace {

cv::Mat imread_checked(const std::filesystem::path& file, int flags) {
    cv::Mat m = cv::imread(file.string(), flags);
    if (m.empty())
        throw std::runtime_error("failed to decode image: " + file.string());
    return m;
}

Tensor mat_to_chw(const cv::Mat& m) {
    const int C = m.channels(), H = m.rows, W = m.cols;
    Tensor t({C, H, W});
    for (int y = 0; y < H; ++y) {
        const double* row = m.ptr<double>(y);
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < C; ++c) t.at(c, y, x) = row[x * C + c];
    }
    return t;
}

cv::Mat chw_to_mat(const Tensor& t) {
    const int C = t.dim(0), H = t.dim(1), W = t.dim(2);
    cv::Mat m(H, W, CV_64FC(C));
    for (int y = 0; y < H; ++y) {
        double* row = m.ptr<double>(y);
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < C; ++c) row[x * C + c] = t.at(c, y, x);
    }
    return m;
}

Tensor resize_with(const Tensor& t, int out_h, int out_w, int interp) {
    if (t.rank() != 3) throw std::invalid_argument("resize: expected (C,H,W)");
    if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("resize: bad target size");
    if (t.dim(1) == out_h && t.dim(2) == out_w) return t.clone();
    cv::Mat src = chw_to_mat(t), dst;
    cv::resize(src, dst, cv::Size(out_w, out_h), 0, 0, interp);
    return mat_to_chw(dst);
}

}  // namespace

Tensor load_rgb(const std::filesystem::path& file) {
    cv::Mat bgr = imread_checked(file, cv::IMREAD_COLOR);
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    cv::Mat f;
    rgb.convertTo(f, CV_64FC3, 1.0 / 255.0);
    return mat_to_chw(f);
}

Tensor load_gray(const std::filesystem::path& file) {
    cv::Mat g = imread_checked(file, cv::IMREAD_GRAYSCALE);
    cv::Mat f;
    g.convertTo(f, CV_64FC1, 1.0 / 255.0);
    return mat_to_chw(f);
}

Tensor resize_bilinear(const Tensor& t, int out_h, int out_w) {
    return resize_with(t, out_h, out_w, cv::INTER_LINEAR);
}

Tensor resize_nearest(const Tensor& t, int out_h, int out_w) {
    return resize_with(t, out_h, out_w, cv::INTER_NEAREST);
}

void save_image_png(const std::filesystem::path& file, const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3)
        throw std::invalid_argument("save_image_png: expected (3,H,W)");
    const int H = image.dim(1), W = image.dim(2);
    cv::Mat bgr(H, W, CV_8UC3);
    for (int y = 0; y < H; ++y) {
        auto* row = bgr.ptr<uchar>(y);
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = std::floor((image.at(c, y, x) + 1.0) * 127.5 + 0.5);
                v = std::min(255.0, std::max(0.0, v));
                // OpenCV stores BGR
                row[x * 3 + (2 - c)] = static_cast<uchar>(v);
            }
    }
    if (!cv::imwrite(file.string(), bgr))
        throw std::runtime_error("failed to write image: " + file.string());
}

void save_mask_png(const std::filesystem::path& file, const Tensor& mask) {
    if (mask.rank() != 3 || mask.dim(0) != 1)
        throw std::invalid_argument("save_mask_png: expected (1,H,W)");
    const int H = mask.dim(1), W = mask.dim(2);
    cv::Mat g(H, W, CV_8UC1);
    for (int y = 0; y < H; ++y) {
        auto* row = g.ptr<uchar>(y);
        for (int x = 0; x < W; ++x) row[x] = mask.at(0, y, x) > 0.5 ? 255 : 0;
    }
    if (!cv::imwrite(file.string(), g))
        throw std::runtime_error("failed to write mask: " + file.string());
}

}  // namespace camogen::img
