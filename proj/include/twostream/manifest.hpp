#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "twostream/error.hpp"
#include "twostream/flow.hpp"
#include "twostream/schedule.hpp"
#include "twostream/tensor.hpp"

namespace twostream {

enum class MediaKind { rgb, flow };

inline MediaKind parse_media_kind(const std::string& s) {
    if (s == "rgb") return MediaKind::rgb;
    if (s == "flow") return MediaKind::flow;
    throw ValueError("unknown media kind '" + s + "' (expected rgb or flow)");
}

inline const char* media_kind_name(MediaKind k) {
    return k == MediaKind::rgb ? "rgb" : "flow";
}

// One line per video, tab-separated: path, label, num_frames, kind.
// For kind=rgb, num_frames counts RGB frames (flow fields, when present in
// the same directory, number num_frames - 1). For kind=flow it counts the
// stored flow fields.
struct ManifestEntry {
    std::filesystem::path path;   // as written; resolved against the manifest dir
    std::size_t label = 0;
    std::size_t num_frames = 0;
    MediaKind kind = MediaKind::rgb;

    bool operator==(const ManifestEntry&) const = default;
};

inline std::string manifest_line(const ManifestEntry& e) {
    std::ostringstream os;
    os << e.path.generic_string() << "\t" << e.label << "\t" << e.num_frames << "\t"
       << media_kind_name(e.kind);
    return os.str();
}

inline std::vector<ManifestEntry> parse_manifest(const std::string& text,
                                                 std::size_t num_classes = 0) {
    std::vector<ManifestEntry> entries;
    std::istringstream is(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string path, label, frames, kind;
        if (!std::getline(ls, path, '\t') || !std::getline(ls, label, '\t') ||
            !std::getline(ls, frames, '\t') || !std::getline(ls, kind, '\t')) {
            throw ManifestError("expected 4 tab-separated fields, got '" + line + "'", line_no);
        }
        if (path.empty()) throw ManifestError("empty path", line_no);
        ManifestEntry e;
        e.path = path;
        try {
            e.label = std::stoul(label);
            e.num_frames = std::stoul(frames);
            e.kind = parse_media_kind(kind);
        } catch (const std::exception& ex) {
            throw ManifestError(std::string("bad field: ") + ex.what(), line_no);
        }
        if (e.num_frames == 0) throw ManifestError("num_frames must be positive", line_no);
        if (num_classes > 0 && e.label >= num_classes) {
            throw ManifestError("label " + std::to_string(e.label) + " out of range [0, " +
                                std::to_string(num_classes) + ")", line_no);
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& file,
                                                std::size_t num_classes = 0) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot open manifest: " + file.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_manifest(text, num_classes);
}

inline void write_manifest(const std::filesystem::path& file,
                           const std::vector<ManifestEntry>& entries) {
    std::ofstream out(file, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest: " + file.string());
    for (const ManifestEntry& e : entries) out << manifest_line(e) << "\n";
}

// ---------------------------------------------------------------------------
// Video payload loading. A manifest path may be a directory of per-frame
// TSR1 files (frame_0000.tsr / flow_0000.tsr) or a single TSR1 file holding
// the whole video (rgb: T x 3 x H x W, flow: F x 2 x H x W).
// ---------------------------------------------------------------------------

struct VideoData {
    std::vector<Tensor> frames;      // each 3 x H x W
    std::vector<FlowField> flows;    // each H x W planes
    std::size_t label = 0;
};

namespace detail {

inline std::filesystem::path numbered_file(const std::filesystem::path& dir,
                                           const char* prefix, std::size_t i) {
    char name[32];
    std::snprintf(name, sizeof name, "%s_%04zu.tsr", prefix, i);
    return dir / name;
}

}  // namespace detail

inline std::filesystem::path resolve_entry_path(const ManifestEntry& e,
                                                const std::filesystem::path& root) {
    return e.path.is_absolute() ? e.path : root / e.path;
}

inline VideoData load_video(const ManifestEntry& entry, const std::filesystem::path& root,
                            bool want_frames, bool want_flows) {
    VideoData video;
    video.label = entry.label;
    auto path = resolve_entry_path(entry, root);
    if (!std::filesystem::exists(path)) {
        throw IoError("manifest entry does not resolve: " + path.string());
    }
    std::size_t flow_count = entry.kind == MediaKind::flow
                                 ? entry.num_frames
                                 : (entry.num_frames > 0 ? entry.num_frames - 1 : 0);
    if (std::filesystem::is_directory(path)) {
        if (want_frames) {
            if (entry.kind != MediaKind::rgb) {
                throw IoError("entry " + path.string() + " has kind=flow, no RGB frames");
            }
            for (std::size_t i = 0; i < entry.num_frames; ++i) {
                Tensor t = read_tsr1(detail::numbered_file(path, "frame", i));
                if (t.rank() != 3 || t.extent(0) != 3) {
                    throw ShapeError("frame must be 3 x H x W, got " + shape_str(t.shape()));
                }
                video.frames.push_back(std::move(t));
            }
        }
        if (want_flows) {
            for (std::size_t i = 0; i < flow_count; ++i) {
                Tensor t = read_tsr1(detail::numbered_file(path, "flow", i));
                video.flows.push_back(flow_field_from_tensor(t));
            }
        }
    } else {
        Tensor whole = read_tsr1(path);
        if (entry.kind == MediaKind::rgb) {
            if (whole.rank() != 4 || whole.extent(1) != 3) {
                throw ShapeError("rgb video file must be T x 3 x H x W, got " +
                                 shape_str(whole.shape()));
            }
            if (whole.extent(0) != entry.num_frames) {
                throw IoError("video file holds " + std::to_string(whole.extent(0)) +
                              " frames, manifest says " + std::to_string(entry.num_frames));
            }
            if (want_frames) {
                for (std::size_t i = 0; i < whole.extent(0); ++i) {
                    video.frames.push_back(slice_leading(whole, i, 1).reshaped(
                        {whole.extent(1), whole.extent(2), whole.extent(3)}));
                }
            }
            if (want_flows) {
                throw IoError("single-file rgb video " + path.string() + " carries no flow");
            }
        } else {
            if (whole.rank() != 4 || whole.extent(1) != 2) {
                throw ShapeError("flow video file must be F x 2 x H x W, got " +
                                 shape_str(whole.shape()));
            }
            if (whole.extent(0) != entry.num_frames) {
                throw IoError("flow file holds " + std::to_string(whole.extent(0)) +
                              " fields, manifest says " + std::to_string(entry.num_frames));
            }
            if (want_frames) {
                throw IoError("entry " + path.string() + " has kind=flow, no RGB frames");
            }
            if (want_flows) {
                for (std::size_t i = 0; i < whole.extent(0); ++i) {
                    video.flows.push_back(flow_field_from_tensor(slice_leading(whole, i, 1)
                        .reshaped({2, whole.extent(2), whole.extent(3)})));
                }
            }
        }
    }
    return video;
}

struct DatasetCache {
    std::vector<VideoData> videos;
};

// Loads only the modality the stream consumes; any missing or malformed
// payload aborts here, before training starts.
inline DatasetCache load_dataset(const std::vector<ManifestEntry>& entries,
                                 const std::filesystem::path& root, Stream stream) {
    DatasetCache cache;
    for (const ManifestEntry& e : entries) {
        cache.videos.push_back(
            load_video(e, root, stream == Stream::spatial, stream == Stream::temporal));
    }
    return cache;
}

}  // namespace twostream
