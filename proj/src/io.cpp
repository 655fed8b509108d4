#include "cbct/io.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <vector>

namespace cbct {

namespace fs = std::filesystem;

namespace {

const std::set<std::string> kCommonKeys = {"kind", "dims", "dtype", "byte_order", "layout", "data_file"};
const std::set<std::string> kGridKeys = {"grid_dims", "voxel_size", "origin_offset"};
const std::set<std::string> kScanKeys = {"dso", "dsd", "angles"};
const std::set<std::string> kDetectorKeys = {"detector_dims", "pixel_size", "detector_offset"};

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string number(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

template <typename T>
std::vector<T> parse_list(const SidecarMeta& meta, const std::string& key, std::size_t expected)
{
    std::istringstream in(meta.get(key));
    std::vector<T> out;
    T x;
    while (in >> x)
        out.push_back(x);
    if (!in.eof() || (expected != 0 && out.size() != expected))
        throw IoError("malformed value for '" + key + "': " + meta.get(key));
    return out;
}

Vec3 parse_vec3(const SidecarMeta& meta, const std::string& key)
{
    const auto v = parse_list<double>(meta, key, 3);
    return Vec3(v[0], v[1], v[2]);
}

Vec2 parse_vec2(const SidecarMeta& meta, const std::string& key)
{
    const auto v = parse_list<double>(meta, key, 2);
    return Vec2(v[0], v[1]);
}

double parse_scalar(const SidecarMeta& meta, const std::string& key)
{
    return parse_list<double>(meta, key, 1)[0];
}

void check_keys(const SidecarMeta& meta, std::initializer_list<const std::set<std::string>*> allowed)
{
    for (const auto& [key, value] : meta.fields) {
        bool known = false;
        for (const auto* set : allowed)
            known = known || set->count(key) != 0;
        if (!known)
            throw IoError("unknown sidecar tag '" + key + "'");
    }
}

void check_payload_tags(const SidecarMeta& meta, const std::string& layout)
{
    if (meta.get("dtype") != "float32")
        throw IoError("unsupported dtype '" + meta.get("dtype") + "' (expected float32)");
    if (meta.get("byte_order") != "little")
        throw IoError("unsupported byte_order '" + meta.get("byte_order") + "' (expected little)");
    if (meta.get("layout") != layout)
        throw IoError("unsupported layout '" + meta.get("layout") + "' (expected " + layout + ")");
}

void put_grid(SidecarMeta& meta, const VoxelGrid& grid, bool as_dims)
{
    const std::string dims =
        std::to_string(grid.n_x) + " " + std::to_string(grid.n_y) + " " + std::to_string(grid.n_z);
    meta.fields[as_dims ? "dims" : "grid_dims"] = dims;
    meta.fields["voxel_size"] =
        number(grid.voxel_size.x()) + " " + number(grid.voxel_size.y()) + " " + number(grid.voxel_size.z());
    meta.fields["origin_offset"] = number(grid.origin_offset.x()) + " " + number(grid.origin_offset.y()) + " " +
                                   number(grid.origin_offset.z());
}

VoxelGrid get_grid(const SidecarMeta& meta, const std::string& dims_key)
{
    const auto dims = parse_list<Index>(meta, dims_key, 3);
    VoxelGrid grid;
    grid.n_x = dims[0];
    grid.n_y = dims[1];
    grid.n_z = dims[2];
    grid.voxel_size = parse_vec3(meta, "voxel_size");
    grid.origin_offset = parse_vec3(meta, "origin_offset");
    try {
        validate(grid);
    } catch (const std::invalid_argument& e) {
        throw IoError(std::string("invalid grid: ") + e.what());
    }
    return grid;
}

void put_scan(SidecarMeta& meta, const ScanGeometry& geometry)
{
    meta.fields["dso"] = number(geometry.dso());
    meta.fields["dsd"] = number(geometry.dsd());
    std::string angles;
    for (double a : geometry.angles())
        angles += (angles.empty() ? "" : " ") + number(a);
    meta.fields["angles"] = angles;
    put_grid(meta, geometry.grid(), false);
}

void put_detector(SidecarMeta& meta, const DetectorGrid& det, const std::string& dims_key)
{
    meta.fields[dims_key] = std::to_string(det.n_u) + " " + std::to_string(det.n_v);
    meta.fields["pixel_size"] = number(det.pixel_size.x()) + " " + number(det.pixel_size.y());
    meta.fields["detector_offset"] = number(det.offset.x()) + " " + number(det.offset.y());
}

DetectorGrid get_detector(const SidecarMeta& meta, const std::string& dims_key)
{
    const auto dims = parse_list<Index>(meta, dims_key, 0);
    if (dims.size() < 2)
        throw IoError("malformed value for '" + dims_key + "'");
    DetectorGrid det;
    det.n_u = dims[0];
    det.n_v = dims[1];
    det.pixel_size = parse_vec2(meta, "pixel_size");
    det.offset = parse_vec2(meta, "detector_offset");
    try {
        validate(det);
    } catch (const std::invalid_argument& e) {
        throw IoError(std::string("invalid detector: ") + e.what());
    }
    return det;
}

ScanGeometry get_scan(const SidecarMeta& meta, const DetectorGrid& det)
{
    try {
        return ScanGeometry(parse_scalar(meta, "dso"), parse_scalar(meta, "dsd"), parse_list<double>(meta, "angles", 0),
                            get_grid(meta, "grid_dims"), det);
    } catch (const std::invalid_argument& e) {
        throw IoError(std::string("invalid geometry: ") + e.what());
    }
}

float swapped(float f)
{
    const auto u = std::bit_cast<std::uint32_t>(f);
    return std::bit_cast<float>((u >> 24) | ((u >> 8) & 0xff00u) | ((u << 8) & 0xff0000u) | (u << 24));
}

fs::path payload_path(const fs::path& sidecar)
{
    fs::path p = sidecar;
    return p.replace_extension(".raw");
}

fs::path temporary_for(const fs::path& path)
{
    fs::path tmp = path;
    tmp += ".tmp";
    return tmp;
}

void write_payload(const fs::path& path, const Buffer& data)
{
    std::vector<float> bytes(data.data(), data.data() + data.size());
    if constexpr (std::endian::native == std::endian::big)
        for (float& f : bytes)
            f = swapped(f);
    const fs::path tmp = temporary_for(path);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size() * 4));
        if (!out)
            throw IoError("failed writing " + tmp.string());
    }
    fs::rename(tmp, path);
}

Buffer read_payload(const fs::path& path, Index count)
{
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in)
        throw IoError("cannot open payload " + path.string());
    const auto size = static_cast<Index>(in.tellg());
    if (size != count * 4)
        throw IoError("payload " + path.string() + " holds " + std::to_string(size) + " bytes, dims require " +
                      std::to_string(count * 4) + (size < count * 4 ? " (truncated)" : ""));
    in.seekg(0);
    Buffer data(count);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * 4));
    if (!in)
        throw IoError("failed reading payload " + path.string());
    if constexpr (std::endian::native == std::endian::big)
        for (Index i = 0; i < count; ++i)
            data[i] = swapped(data[i]);
    return data;
}

fs::path resolve_payload(const fs::path& sidecar, const SidecarMeta& meta)
{
    const fs::path data = meta.get("data_file");
    return data.is_absolute() ? data : sidecar.parent_path() / data;
}

void write_with_payload(const fs::path& path, SidecarMeta meta, const Buffer& data)
{
    const fs::path raw = payload_path(path);
    if (raw == path)
        throw IoError("sidecar path must not end in .raw: " + path.string());
    meta.fields["dtype"] = "float32";
    meta.fields["byte_order"] = "little";
    meta.fields["data_file"] = raw.filename().string();
    write_payload(raw, data);
    write_text_file(path, format_sidecar(meta));
}

}  // namespace

const std::string& SidecarMeta::get(const std::string& key) const
{
    const auto it = fields.find(key);
    if (it == fields.end())
        throw IoError("sidecar is missing '" + key + "'");
    return it->second;
}

SidecarMeta read_sidecar(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open sidecar " + path.string());
    SidecarMeta meta;
    std::string line;
    Index number = 0;
    while (std::getline(in, line)) {
        ++number;
        const std::string body = trim(line);
        if (body.empty() || body[0] == '#')
            continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw IoError(path.string() + ":" + std::to_string(number) + ": expected 'key = value'");
        const std::string key = trim(body.substr(0, eq));
        if (meta.fields.count(key))
            throw IoError("duplicate sidecar tag '" + key + "'");
        meta.fields[key] = trim(body.substr(eq + 1));
    }
    meta.kind = meta.get("kind");
    return meta;
}

std::string format_sidecar(const SidecarMeta& meta)
{
    std::ostringstream out;
    out << "kind = " << meta.kind << '\n';
    for (const auto& [key, value] : meta.fields)
        if (key != "kind")
            out << key << " = " << value << '\n';
    return out.str();
}

void write_text_file(const fs::path& path, const std::string& text)
{
    const fs::path tmp = temporary_for(path);
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out)
            throw IoError("cannot open " + tmp.string() + " for writing");
        out << text;
        if (!out)
            throw IoError("failed writing " + tmp.string());
    }
    fs::rename(tmp, path);
}

void write_volume(const fs::path& path, const Volume& volume)
{
    if (!volume.is_full())
        throw IoError("only whole volumes can be written");
    SidecarMeta meta;
    meta.kind = "volume";
    meta.fields["layout"] = "x-fastest";
    put_grid(meta, volume.grid, true);
    write_with_payload(path, meta, volume.data);
}

Volume read_volume(const fs::path& path)
{
    const SidecarMeta meta = read_sidecar(path);
    if (meta.kind != "volume")
        throw IoError("sidecar kind is '" + meta.kind + "', expected volume");
    check_keys(meta, {&kCommonKeys, &kGridKeys});
    check_payload_tags(meta, "x-fastest");
    const VoxelGrid grid = get_grid(meta, "dims");
    Volume v;
    v.grid = grid;
    v.slab = {0, grid.n_z};
    v.data = read_payload(resolve_payload(path, meta), grid.voxel_count());
    return v;
}

void write_projections(const fs::path& path, const ProjectionStack& projections, const ScanGeometry* geometry)
{
    SidecarMeta meta;
    meta.kind = "projections";
    meta.fields["layout"] = "u-fastest";
    put_detector(meta, projections.detector, "detector_dims");
    meta.fields["dims"] = std::to_string(projections.detector.n_u) + " " + std::to_string(projections.detector.n_v) +
                          " " + std::to_string(projections.angles.size());
    meta.fields["angle_begin"] = std::to_string(projections.angles.begin);
    if (geometry) {
        if (!(geometry->detector() == projections.detector))
            throw IoError("geometry detector does not match the projections");
        put_scan(meta, *geometry);
    }
    write_with_payload(path, meta, projections.data);
}

ProjectionFile read_projections(const fs::path& path)
{
    const SidecarMeta meta = read_sidecar(path);
    if (meta.kind != "projections")
        throw IoError("sidecar kind is '" + meta.kind + "', expected projections");
    static const std::set<std::string> extra = {"angle_begin"};
    check_keys(meta, {&kCommonKeys, &kGridKeys, &kScanKeys, &kDetectorKeys, &extra});
    check_payload_tags(meta, "u-fastest");
    const auto dims = parse_list<Index>(meta, "dims", 3);
    const DetectorGrid det = get_detector(meta, "detector_dims");
    if (dims[0] != det.n_u || dims[1] != det.n_v || dims[2] < 1)
        throw IoError("projection dims do not match the detector");
    const Index begin = meta.has("angle_begin") ? parse_list<Index>(meta, "angle_begin", 1)[0] : 0;

    ProjectionFile file;
    file.projections.detector = det;
    file.projections.angles = {begin, begin + dims[2]};
    file.projections.data = read_payload(resolve_payload(path, meta), det.pixel_count() * dims[2]);
    if (meta.has("dso")) {
        file.geometry = get_scan(meta, det);
        if (file.projections.angles.end > file.geometry->angle_count())
            throw IoError("projection angles exceed the scan's angle list");
    }
    return file;
}

void write_geometry(const fs::path& path, const ScanGeometry& geometry)
{
    SidecarMeta meta;
    meta.kind = "geometry";
    put_scan(meta, geometry);
    put_detector(meta, geometry.detector(), "detector_dims");
    write_text_file(path, format_sidecar(meta));
}

ScanGeometry read_geometry(const fs::path& path)
{
    const SidecarMeta meta = read_sidecar(path);
    if (meta.kind != "geometry" && meta.kind != "projections")
        throw IoError("sidecar kind is '" + meta.kind + "', expected geometry");
    static const std::set<std::string> extra = {"angle_begin"};
    check_keys(meta, {&kCommonKeys, &kGridKeys, &kScanKeys, &kDetectorKeys, &extra});
    return get_scan(meta, get_detector(meta, "detector_dims"));
}

}  // namespace cbct
