#pragma once

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>

#include "svad/config.hpp"

namespace svad {

namespace fs = std::filesystem;

// Accident category codes from the dataset's class table, in table order.
inline const std::vector<std::string>& category_codes() {
    static const std::vector<std::string> codes = {"ST", "AH", "LA", "OC", "TC",
                                                   "VP", "VO", "OO", "UK"};
    return codes;
}

inline std::optional<int> category_id(const std::string& code) {
    const auto& codes = category_codes();
    for (std::size_t i = 0; i < codes.size(); ++i)
        if (codes[i] == code) return static_cast<int>(i);
    return std::nullopt;
}

struct VideoAnnotation {
    std::string video_id;
    std::size_t num_frames = 0;
    std::size_t anomaly_start = 0;
    std::size_t anomaly_end = 0;  // inclusive
    int category = 8;             // UK by default
    bool ego_involved = false;

    bool valid() const {
        return num_frames > 0 && anomaly_start <= anomaly_end &&
               anomaly_end < num_frames;
    }
};

inline void to_json(json& j, const VideoAnnotation& a) {
    j = json{{"video_id", a.video_id},
             {"num_frames", a.num_frames},
             {"anomaly_start", a.anomaly_start},
             {"anomaly_end", a.anomaly_end},
             {"accident_category", category_codes().at(static_cast<std::size_t>(a.category))},
             {"ego_involved", a.ego_involved}};
}

inline void from_json(const json& j, VideoAnnotation& a) {
    j.at("video_id").get_to(a.video_id);
    j.at("num_frames").get_to(a.num_frames);
    j.at("anomaly_start").get_to(a.anomaly_start);
    j.at("anomaly_end").get_to(a.anomaly_end);
    std::string code = j.at("accident_category").get<std::string>();
    auto id = category_id(code);
    check(id.has_value(), "unknown accident category: " + code);
    a.category = *id;
    j.at("ego_involved").get_to(a.ego_involved);
}

// Reads every annotations/*.json under root. Malformed records are
// reported to stderr and skipped; missing files throw.
inline std::vector<VideoAnnotation> parse_annotations(const std::string& root) {
    fs::path dir = fs::path(root) / "annotations";
    check(fs::is_directory(dir), "annotation directory not found: " + dir.string());
    std::map<std::string, VideoAnnotation> sorted;  // deterministic order
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() != ".json") continue;
        try {
            std::ifstream in(entry.path());
            check(in.good(), "unreadable annotation file: " + entry.path().string());
            VideoAnnotation a = json::parse(in).get<VideoAnnotation>();
            check(a.valid(), "invalid anomaly bounds");
            sorted[a.video_id] = std::move(a);
        } catch (const std::exception& e) {
            std::cerr << "warning: skipping " << entry.path().filename().string() << ": "
                      << e.what() << "\n";
        }
    }
    std::vector<VideoAnnotation> out;
    out.reserve(sorted.size());
    for (auto& [_, a] : sorted) out.push_back(std::move(a));
    return out;
}

inline void write_annotation(const VideoAnnotation& a, const std::string& root) {
    fs::path dir = fs::path(root) / "annotations";
    fs::create_directories(dir);
    std::ofstream out(dir / (a.video_id + ".json"));
    check(out.good(), "cannot write annotation for " + a.video_id);
    out << json(a).dump(2) << "\n";
}

// Per-frame binary labels; the anomaly window is inclusive on both ends.
inline std::vector<int> frame_labels(const VideoAnnotation& a) {
    check(a.valid(), "frame_labels: invalid annotation");
    std::vector<int> labels(a.num_frames, 0);
    for (std::size_t i = a.anomaly_start; i <= a.anomaly_end; ++i) labels[i] = 1;
    return labels;
}

// ---- frames ----
// Frames are [H, W, 3] tensors with RGB in [0,1].

inline void write_ppm(const Tensor& frame, const std::string& path) {
    check(frame.rank() == 3 && frame.shape[2] == 3, "write_ppm: expects [H,W,3]");
    std::ofstream out(path, std::ios::binary);
    check(out.good(), "cannot write image: " + path);
    out << "P6\n" << frame.shape[1] << " " << frame.shape[0] << "\n255\n";
    std::vector<unsigned char> bytes(frame.size());
    for (std::size_t i = 0; i < frame.size(); ++i) {
        double v = std::clamp(frame[i], 0.0, 1.0);
        bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

inline Tensor read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), "cannot open image: " + path);
    std::string magic;
    in >> magic;
    check(magic == "P6", "unsupported image format in " + path);
    std::size_t w = 0, h = 0, maxval = 0;
    in >> w >> h >> maxval;
    check(maxval == 255, "unsupported bit depth in " + path);
    in.get();  // single whitespace after header
    std::vector<unsigned char> bytes(h * w * 3);
    in.read(reinterpret_cast<char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    check(in.good(), "truncated image: " + path);
    Tensor frame({h, w, 3});
    for (std::size_t i = 0; i < bytes.size(); ++i)
        frame[i] = static_cast<double>(bytes[i]) / 255.0;
    return frame;
}

// Bilinear resize; returns the input untouched when dims already match.
inline Tensor resize_frame(const Tensor& frame, std::size_t out_h, std::size_t out_w) {
    check(frame.rank() == 3 && frame.shape[2] == 3, "resize: expects [H,W,3]");
    std::size_t h = frame.shape[0], w = frame.shape[1];
    if (h == out_h && w == out_w) return frame;
    Tensor out({out_h, out_w, 3});
    double sy = static_cast<double>(h) / static_cast<double>(out_h);
    double sx = static_cast<double>(w) / static_cast<double>(out_w);
    for (std::size_t y = 0; y < out_h; ++y) {
        double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
        std::size_t y0 = static_cast<std::size_t>(fy);
        std::size_t y1 = std::min(y0 + 1, h - 1);
        double wy = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < out_w; ++x) {
            double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
            std::size_t x0 = static_cast<std::size_t>(fx);
            std::size_t x1 = std::min(x0 + 1, w - 1);
            double wx = fx - static_cast<double>(x0);
            for (std::size_t c = 0; c < 3; ++c) {
                double v00 = frame[(y0 * w + x0) * 3 + c];
                double v01 = frame[(y0 * w + x1) * 3 + c];
                double v10 = frame[(y1 * w + x0) * 3 + c];
                double v11 = frame[(y1 * w + x1) * 3 + c];
                out[(y * out_w + x) * 3 + c] = (1 - wy) * ((1 - wx) * v00 + wx * v01) +
                                               wy * ((1 - wx) * v10 + wx * v11);
            }
        }
    }
    return out;
}

// Minimal decoder interface so tests can run on image directories or
// in-memory tensors without any codec dependency.
class FrameSource {
public:
    virtual ~FrameSource() = default;
    virtual std::size_t frame_count() const = 0;
    virtual Tensor frame(std::size_t index) const = 0;  // [H,W,3] in [0,1]
};

class MemoryFrameSource : public FrameSource {
public:
    explicit MemoryFrameSource(std::vector<Tensor> frames) : frames_(std::move(frames)) {}
    std::size_t frame_count() const override { return frames_.size(); }
    Tensor frame(std::size_t index) const override { return frames_.at(index); }

private:
    std::vector<Tensor> frames_;
};

// Directory of numbered image frames, ordered by numeric filename.
class DirFrameSource : public FrameSource {
public:
    explicit DirFrameSource(const std::string& dir) {
        check(fs::is_directory(dir), "frame directory not found: " + dir);
        std::map<long, fs::path> ordered;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.path().extension() != ".ppm") continue;
            ordered[std::stol(entry.path().stem().string())] = entry.path();
        }
        check(!ordered.empty(), "no frames in " + dir);
        for (auto& [_, p] : ordered) paths_.push_back(p.string());
    }
    std::size_t frame_count() const override { return paths_.size(); }
    Tensor frame(std::size_t index) const override {
        try {
            return read_ppm(paths_.at(index));
        } catch (const std::exception& e) {
            throw std::runtime_error("frame " + std::to_string(index) +
                                     " decode failed: " + e.what());
        }
    }

private:
    std::vector<std::string> paths_;
};

inline std::vector<Tensor> load_frames(const FrameSource& src, std::size_t target_h,
                                       std::size_t target_w) {
    std::vector<Tensor> out;
    out.reserve(src.frame_count());
    for (std::size_t i = 0; i < src.frame_count(); ++i)
        out.push_back(resize_frame(src.frame(i), target_h, target_w));
    return out;
}

// One video fully loaded for training/evaluation.
struct LoadedVideo {
    VideoAnnotation ann;
    std::vector<Tensor> frames;  // resized, [0,1]
    std::vector<int> labels;
};

using LoadedDataset = std::vector<LoadedVideo>;

// Loads a dataset directory (annotations/ + frames/<id>/) at model input size.
inline LoadedDataset load_dataset(const std::string& root, std::size_t target_h,
                                  std::size_t target_w) {
    LoadedDataset out;
    for (const auto& ann : parse_annotations(root)) {
        LoadedVideo v;
        v.ann = ann;
        DirFrameSource src((fs::path(root) / "frames" / ann.video_id).string());
        check(src.frame_count() == ann.num_frames,
              "frame count mismatch for video " + ann.video_id);
        v.frames = load_frames(src, target_h, target_w);
        v.labels = frame_labels(ann);
        out.push_back(std::move(v));
    }
    check(!out.empty(), "empty dataset: " + root);
    return out;
}

// Per-channel standardization of a [0,1] RGB frame using the fixed
// constants recorded in the backbone config.
inline Tensor standardize(const Tensor& frame, const StmmConfig& cfg) {
    Tensor out = frame;
    for (std::size_t i = 0; i < out.size(); i += 3)
        for (std::size_t c = 0; c < 3; ++c)
            out[i + c] = (out[i + c] - cfg.pixel_mean[c]) / cfg.pixel_std[c];
    return out;
}

}  // namespace svad
