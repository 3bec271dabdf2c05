#include "trd/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace trd {

Tensor load_image_rgb(const std::string& path) {
    cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);
    if (img.empty()) throw IngestionError("unreadable image: " + path);
    Tensor out({3, img.rows, img.cols});
    for (int y = 0; y < img.rows; ++y) {
        const cv::Vec3b* row = img.ptr<cv::Vec3b>(y);
        for (int x = 0; x < img.cols; ++x) {
            // OpenCV loads BGR
            out[static_cast<std::int64_t>(0) * img.rows * img.cols + static_cast<std::int64_t>(y) * img.cols + x] = row[x][2] / 255.0;
            out[static_cast<std::int64_t>(1) * img.rows * img.cols + static_cast<std::int64_t>(y) * img.cols + x] = row[x][1] / 255.0;
            out[static_cast<std::int64_t>(2) * img.rows * img.cols + static_cast<std::int64_t>(y) * img.cols + x] = row[x][0] / 255.0;
        }
    }
    return out;
}

void save_image_rgb(const std::string& path, const Tensor& chw01) {
    if (chw01.ndim() != 3 || chw01.dim(0) != 3) throw IngestionError("save_image_rgb: expected 3xHxW tensor");
    const int H = chw01.dim(1), W = chw01.dim(2);
    cv::Mat img(H, W, CV_8UC3);
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    for (int y = 0; y < H; ++y) {
        cv::Vec3b* row = img.ptr<cv::Vec3b>(y);
        for (int x = 0; x < W; ++x) {
            const std::int64_t i = static_cast<std::int64_t>(y) * W + x;
            auto q = [&](int c) {
                return static_cast<unsigned char>(std::lround(std::clamp(chw01[c * plane + i], 0.0, 1.0) * 255.0));
            };
            row[x] = cv::Vec3b(q(2), q(1), q(0));
        }
    }
    if (!cv::imwrite(path, img)) throw IngestionError("cannot write image: " + path);
}

Tensor load_depth_grid(const std::string& path) {
    cv::Mat raw = cv::imread(path, cv::IMREAD_UNCHANGED);
    if (raw.empty()) throw IngestionError("unreadable depth file: " + path);
    cv::Mat z;
    if (raw.channels() == 3) {
        // x/y/z position grid: keep z
        cv::extractChannel(raw, z, 2);
    } else if (raw.channels() == 1) {
        z = raw;
    } else {
        throw IngestionError("unsupported depth channel count in " + path);
    }
    Tensor out({z.rows, z.cols});
    for (int y = 0; y < z.rows; ++y)
        for (int x = 0; x < z.cols; ++x) {
            double v = 0.0;
            switch (z.depth()) {
                case CV_8U: v = z.at<unsigned char>(y, x) / 255.0; break;
                case CV_16U: v = z.at<unsigned short>(y, x) / 65535.0; break;
                case CV_32F: v = z.at<float>(y, x); break;
                case CV_64F: v = z.at<double>(y, x); break;
                default: throw IngestionError("unsupported depth pixel type in " + path);
            }
            out.at(y, x) = v;
        }
    return out;
}

void save_depth16(const std::string& path, const Tensor& hw01) {
    if (hw01.ndim() != 2) throw IngestionError("save_depth16: expected HxW tensor");
    const int H = hw01.dim(0), W = hw01.dim(1);
    cv::Mat img(H, W, CV_16UC1);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            img.at<unsigned short>(y, x) =
                static_cast<unsigned short>(std::lround(1.0 + std::clamp(hw01.at(y, x), 0.0, 1.0) * 65534.0));
    if (!cv::imwrite(path, img)) throw IngestionError("cannot write depth file: " + path);
}

std::pair<CompanionKind, Tensor> load_companion(const std::string& path) {
    cv::Mat raw = cv::imread(path, cv::IMREAD_UNCHANGED);
    if (raw.empty()) throw IngestionError("unreadable companion file: " + path);
    if (raw.channels() == 3 && raw.depth() == CV_8U) return {CompanionKind::kImage3Ch, load_image_rgb(path)};
    return {CompanionKind::kGrid, load_depth_grid(path)};
}

Tensor load_mask(const std::string& path) {
    cv::Mat img = cv::imread(path, cv::IMREAD_GRAYSCALE);
    if (img.empty()) throw IngestionError("unreadable mask: " + path);
    Tensor out({img.rows, img.cols});
    for (int y = 0; y < img.rows; ++y)
        for (int x = 0; x < img.cols; ++x) out.at(y, x) = img.at<unsigned char>(y, x) > 0 ? 1.0 : 0.0;
    return out;
}

void save_mask(const std::string& path, const Tensor& hw) {
    if (hw.ndim() != 2) throw IngestionError("save_mask: expected HxW tensor");
    cv::Mat img(hw.dim(0), hw.dim(1), CV_8UC1);
    for (int y = 0; y < hw.dim(0); ++y)
        for (int x = 0; x < hw.dim(1); ++x) img.at<unsigned char>(y, x) = hw.at(y, x) > 0 ? 255 : 0;
    if (!cv::imwrite(path, img)) throw IngestionError("cannot write mask: " + path);
}

static_assert(std::endian::native == std::endian::little, "float grid format assumes a little-endian host");

void save_float_grid(const std::string& path, const Tensor& hw) {
    if (hw.ndim() != 2) throw IngestionError("save_float_grid: expected HxW tensor");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IngestionError("cannot write float grid: " + path);
    const std::uint32_t h = static_cast<std::uint32_t>(hw.dim(0)), w = static_cast<std::uint32_t>(hw.dim(1));
    f.write(reinterpret_cast<const char*>(&h), 4);
    f.write(reinterpret_cast<const char*>(&w), 4);
    std::vector<float> buf(static_cast<size_t>(hw.size()));
    for (std::int64_t i = 0; i < hw.size(); ++i) buf[static_cast<size_t>(i)] = static_cast<float>(hw[i]);
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!f) throw IngestionError("write failed: " + path);
}

Tensor load_float_grid(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IngestionError("cannot open float grid: " + path);
    std::uint32_t h = 0, w = 0;
    f.read(reinterpret_cast<char*>(&h), 4);
    f.read(reinterpret_cast<char*>(&w), 4);
    if (!f || h == 0 || w == 0) throw IngestionError("corrupt float grid header: " + path);
    Tensor out({static_cast<int>(h), static_cast<int>(w)});
    std::vector<float> buf(static_cast<size_t>(h) * w);
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!f) throw IngestionError("truncated float grid: " + path);
    for (size_t i = 0; i < buf.size(); ++i) out[static_cast<std::int64_t>(i)] = buf[i];
    return out;
}

void save_heatmap_png(const std::string& path, const Tensor& hw, const Tensor* gt) {
    if (hw.ndim() != 2) throw IngestionError("save_heatmap_png: expected HxW tensor");
    const int H = hw.dim(0), W = hw.dim(1);
    const double lo = hw.min_value(), hi = hw.max_value();
    const double range = hi - lo;
    cv::Mat gray(H, W, CV_8UC1);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            gray.at<unsigned char>(y, x) =
                range > 0 ? static_cast<unsigned char>(std::lround((hw.at(y, x) - lo) / range * 255.0)) : 0;
    cv::Mat color;
    cv::applyColorMap(gray, color, cv::COLORMAP_VIRIDIS);
    if (gt) {
        if (gt->ndim() != 2 || gt->dim(0) != H || gt->dim(1) != W)
            throw DimensionError("save_heatmap_png: gt mask shape mismatch");
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                if (gt->at(y, x) <= 0) continue;
                bool boundary = false;
                for (int dy = -1; dy <= 1 && !boundary; ++dy)
                    for (int dx = -1; dx <= 1 && !boundary; ++dx) {
                        const int ny = y + dy, nx = x + dx;
                        if (ny < 0 || ny >= H || nx < 0 || nx >= W || gt->at(ny, nx) <= 0) boundary = true;
                    }
                if (boundary) color.at<cv::Vec3b>(y, x) = cv::Vec3b(255, 255, 255);
            }
    }
    if (!cv::imwrite(path, color)) throw IngestionError("cannot write heatmap: " + path);
}

}  // namespace trd
