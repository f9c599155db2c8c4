#pragma once

#include "svad/data.hpp"

namespace svad {

// Anomaly signal kinds for generated videos.
//   appearance: the moving object changes color inside the window; a
//     single frame is enough to detect it.
//   motion: the object teleports randomly inside the window; single-frame
//     marginals match the normal phase, so at least two frames are needed.
//   long_range: a cue patch shown once at the start of the video fixes the
//     expected indicator color; inside the window the indicator flips.
//     The cue is older than any short clip, so detection needs carried
//     state. Cue colors are balanced across videos, which makes the
//     indicator color alone uninformative. The scene is otherwise static:
//     with shared_background, clips from opposite-cue videos are pixel
//     identical, so no memoryless model can beat chance by memorizing.
//   mixed: alternating motion / long_range videos (the memory-ablation
//     dataset: short-term memory helps on half, long-term on the other).
enum class AnomalyKind { appearance, motion, long_range, mixed };

inline std::string to_string(AnomalyKind k) {
    switch (k) {
        case AnomalyKind::appearance: return "appearance";
        case AnomalyKind::motion: return "motion";
        case AnomalyKind::long_range: return "long_range";
        case AnomalyKind::mixed: return "mixed";
    }
    return "?";
}

inline AnomalyKind anomaly_kind_from_string(const std::string& s) {
    if (s == "appearance") return AnomalyKind::appearance;
    if (s == "motion") return AnomalyKind::motion;
    if (s == "long_range") return AnomalyKind::long_range;
    if (s == "mixed") return AnomalyKind::mixed;
    throw std::invalid_argument("unknown anomaly kind: " + s);
}

struct SyntheticSpec {
    std::size_t num_videos = 8;
    std::size_t frames_per_video = 20;
    std::size_t h = 16;
    std::size_t w = 16;
    AnomalyKind kind = AnomalyKind::appearance;
    std::size_t window_min = 5;
    std::size_t window_max = 8;
    // One background texture for the whole dataset instead of one per
    // video. Use this when models must not identify videos by their
    // background (e.g. memory ablations on the long-range kinds).
    bool shared_background = false;
    std::uint64_t seed = 1;

    void validate() const {
        check(num_videos >= 1 && frames_per_video >= 4, "SyntheticSpec: too small");
        check(h % 4 == 0 && w % 4 == 0 && h >= 16 && w >= 16,
              "SyntheticSpec: H, W must be multiples of 4, at least 16");
        check(window_min >= 1 && window_min <= window_max,
              "SyntheticSpec: bad window length range");
        std::size_t min_start = earliest_start();
        check(min_start + window_min <= frames_per_video,
              "SyntheticSpec: infeasible anomaly window");
    }

    // Long-range windows must start well after the cue (shown at frames
    // 0..1) so the cue is outside any short clip of up to 5 frames.
    std::size_t earliest_start() const {
        bool has_long = kind == AnomalyKind::long_range || kind == AnomalyKind::mixed;
        return has_long ? 8 : 2;
    }
};

inline void to_json(json& j, const SyntheticSpec& s) {
    j = json{{"num_videos", s.num_videos}, {"frames_per_video", s.frames_per_video},
             {"h", s.h},                   {"w", s.w},
             {"kind", to_string(s.kind)},  {"window_min", s.window_min},
             {"window_max", s.window_max}, {"shared_background", s.shared_background},
             {"seed", s.seed}};
}
inline void from_json(const json& j, SyntheticSpec& s) {
    j.at("num_videos").get_to(s.num_videos);
    j.at("frames_per_video").get_to(s.frames_per_video);
    j.at("h").get_to(s.h);
    j.at("w").get_to(s.w);
    s.kind = anomaly_kind_from_string(j.at("kind").get<std::string>());
    j.at("window_min").get_to(s.window_min);
    j.at("window_max").get_to(s.window_max);
    s.shared_background = j.value("shared_background", false);
    j.at("seed").get_to(s.seed);
}

namespace detail {

struct Rgb {
    double r, g, b;
};

inline void fill_rect(Tensor& frame, std::size_t y0, std::size_t x0, std::size_t size,
                      Rgb color) {
    std::size_t h = frame.shape[0], w = frame.shape[1];
    for (std::size_t y = y0; y < std::min(y0 + size, h); ++y)
        for (std::size_t x = x0; x < std::min(x0 + size, w); ++x) {
            frame[(y * w + x) * 3 + 0] = color.r;
            frame[(y * w + x) * 3 + 1] = color.g;
            frame[(y * w + x) * 3 + 2] = color.b;
        }
}

// Snap to the 8-bit grid so in-memory frames match a PPM round-trip.
inline void quantize(Tensor& frame) {
    for (double& v : frame.data)
        v = std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
}

}  // namespace detail

// Procedurally renders the dataset. Same spec + seed gives bitwise
// identical pixels and labels.
inline LoadedDataset generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    const std::size_t patch = spec.h / 4;
    const detail::Rgb object{0.2, 0.4, 0.9};
    const detail::Rgb object_anom{0.95, 0.1, 0.1};
    const detail::Rgb cue_a{0.1, 0.9, 0.1};
    const detail::Rgb cue_b{0.9, 0.1, 0.9};

    // moving object keeps clear of the cue/indicator strip at the top
    const std::size_t y_lo = patch + 1;
    const std::size_t y_hi = spec.h - patch;  // exclusive upper corner bound
    const std::size_t x_hi = spec.w - patch;
    check(y_hi > y_lo, "SyntheticSpec: frame too small for the object track");

    std::uniform_real_distribution<double> noise(0.35, 0.45);
    auto draw_background = [&](std::mt19937_64& r) {
        Tensor bg({spec.h, spec.w, 3});
        for (std::size_t i = 0; i < bg.size(); i += 3) {
            double g = noise(r);
            bg[i] = bg[i + 1] = bg[i + 2] = g;
        }
        return bg;
    };
    Tensor shared_bg;
    if (spec.shared_background) shared_bg = draw_background(rng);

    LoadedDataset out;
    std::size_t n_long = 0;
    for (std::size_t v = 0; v < spec.num_videos; ++v) {
        AnomalyKind kind = spec.kind;
        if (kind == AnomalyKind::mixed)
            kind = (v % 2 == 0) ? AnomalyKind::motion : AnomalyKind::long_range;

        // anomaly window
        std::uniform_int_distribution<std::size_t> len_dist(
            spec.window_min,
            std::min(spec.window_max, spec.frames_per_video - spec.earliest_start()));
        std::size_t len = len_dist(rng);
        std::uniform_int_distribution<std::size_t> start_dist(
            spec.earliest_start(), spec.frames_per_video - len);
        std::size_t start = start_dist(rng);
        std::size_t end = start + len - 1;

        // static textured background
        Tensor background = spec.shared_background ? shared_bg : draw_background(rng);

        // object track
        std::uniform_int_distribution<std::size_t> ypos(y_lo, y_hi - 1);
        std::uniform_int_distribution<std::size_t> xpos(0, x_hi - 1);
        double oy = static_cast<double>(ypos(rng));
        double ox = static_cast<double>(xpos(rng));
        std::uniform_int_distribution<int> vel(0, 1);
        double vy = vel(rng) ? 1.0 : -1.0;
        double vx = vel(rng) ? 1.0 : -1.0;

        // cue color alternates over long-range videos to stay balanced
        bool cue_is_a = false;
        if (kind == AnomalyKind::long_range) cue_is_a = (n_long++ % 2 == 0);
        detail::Rgb cue = cue_is_a ? cue_a : cue_b;
        detail::Rgb cue_flip = cue_is_a ? cue_b : cue_a;

        LoadedVideo video;
        video.ann.video_id = "synth_" + std::string(4 - std::to_string(v).size(), '0') +
                             std::to_string(v);
        video.ann.num_frames = spec.frames_per_video;
        video.ann.anomaly_start = start;
        video.ann.anomaly_end = end;
        video.ann.category = static_cast<int>(v % category_codes().size());
        video.ann.ego_involved = (v % 2 == 0);

        for (std::size_t f = 0; f < spec.frames_per_video; ++f) {
            bool in_window = f >= start && f <= end;
            Tensor frame = background;

            // advance the bouncing track
            if (kind == AnomalyKind::motion && in_window) {
                // diagonal bouncing preserves the parity of y+x, so the
                // teleport must too or a single frame would betray it
                std::size_t parity =
                    (static_cast<std::size_t>(oy) + static_cast<std::size_t>(ox)) % 2;
                std::size_t ny = ypos(rng), nx = xpos(rng);
                if ((ny + nx) % 2 != parity) nx = nx > 0 ? nx - 1 : nx + 1;
                oy = static_cast<double>(ny);
                ox = static_cast<double>(nx);
            } else if (f > 0) {
                oy += vy;
                ox += vx;
                if (oy < y_lo || oy > y_hi - 1) {
                    vy = -vy;
                    oy += 2 * vy;
                }
                if (ox < 0 || ox > x_hi - 1) {
                    vx = -vx;
                    ox += 2 * vx;
                }
            }
            if (kind != AnomalyKind::long_range) {
                detail::Rgb color =
                    (kind == AnomalyKind::appearance && in_window) ? object_anom : object;
                detail::fill_rect(frame, static_cast<std::size_t>(oy),
                                  static_cast<std::size_t>(ox), patch, color);
            }

            if (kind == AnomalyKind::long_range) {
                if (f <= 1) detail::fill_rect(frame, 0, 0, patch, cue);
                detail::fill_rect(frame, 0, spec.w - patch, patch,
                                  in_window ? cue_flip : cue);
            }

            detail::quantize(frame);
            video.frames.push_back(std::move(frame));
        }
        video.labels = frame_labels(video.ann);
        out.push_back(std::move(video));
    }
    return out;
}

// Writes the dataset in the same layout the parser reads
// (annotations/*.json + frames/<id>/NNNNNN.ppm).
inline void write_dataset(const LoadedDataset& ds, const std::string& root) {
    for (const auto& video : ds) {
        write_annotation(video.ann, root);
        fs::path dir = fs::path(root) / "frames" / video.ann.video_id;
        fs::create_directories(dir);
        for (std::size_t f = 0; f < video.frames.size(); ++f) {
            char name[16];
            std::snprintf(name, sizeof(name), "%06zu.ppm", f);
            write_ppm(video.frames[f], (dir / name).string());
        }
    }
}

}  // namespace svad
