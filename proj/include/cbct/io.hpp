#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

#include "cbct/geometry.hpp"
#include "cbct/volume.hpp"

namespace cbct {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Plain-text `key = value` metadata describing a raw float32 payload.
struct SidecarMeta {
    std::string kind;  ///< volume, projections or geometry
    std::map<std::string, std::string> fields;

    const std::string& get(const std::string& key) const;
    bool has(const std::string& key) const { return fields.count(key) != 0; }
};

SidecarMeta read_sidecar(const std::filesystem::path& path);
std::string format_sidecar(const SidecarMeta& meta);

/// Volumes are written as `<path>` (sidecar) plus `<path stem>.raw` (payload); the payload
/// lands first and each file is renamed into place, so a sidecar never refers to a
/// missing or partial payload.
void write_volume(const std::filesystem::path& path, const Volume& volume);
Volume read_volume(const std::filesystem::path& path);

struct ProjectionFile {
    ProjectionStack projections;
    std::optional<ScanGeometry> geometry;
};

void write_projections(const std::filesystem::path& path, const ProjectionStack& projections,
                       const ScanGeometry* geometry = nullptr);
ProjectionFile read_projections(const std::filesystem::path& path);

void write_geometry(const std::filesystem::path& path, const ScanGeometry& geometry);
ScanGeometry read_geometry(const std::filesystem::path& path);

/// Writes text atomically (temporary file, then rename).
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace cbct
