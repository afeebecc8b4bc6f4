#include "gaf/field.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace gaf {

PointParams pack(const GaussianPoint& p)
{
    return {p.mean.x(), p.mean.y(), p.mean.z(),
            p.displacement.x(), p.displacement.y(), p.displacement.z(),
            p.color.x(), p.color.y(), p.color.z(),
            p.opacity_logit,
            p.rotation.w, p.rotation.x, p.rotation.y, p.rotation.z,
            p.log_scale.x(), p.log_scale.y(), p.log_scale.z()};
}

void unpack(const PointParams& v, GaussianPoint& p)
{
    p.mean = {v[0], v[1], v[2]};
    p.displacement = {v[3], v[4], v[5]};
    p.color = {v[6], v[7], v[8]};
    p.opacity_logit = v[9];
    p.rotation = {v[10], v[11], v[12], v[13]};
    p.log_scale = {v[14], v[15], v[16]};
}

FieldDelta& FieldDelta::operator+=(const FieldDelta& o)
{
    if (o.size() != size()) throw std::invalid_argument("FieldDelta size mismatch");
    for (std::size_t i = 0; i < grads.size(); ++i)
        for (int k = 0; k < kParamsPerPoint; ++k) grads[i][k] += o.grads[i][k];
    return *this;
}

bool FieldDelta::all_finite() const
{
    for (const auto& g : grads)
        for (double v : g)
            if (!std::isfinite(v)) return false;
    return true;
}

GaussianField advance(const GaussianField& field, double fraction)
{
    if (!(fraction >= 0.0 && fraction <= 1.0)) {
        throw std::invalid_argument("advance: fraction outside [0, 1]");
    }
    GaussianField out = field;
    if (fraction == 0.0) return out;
    for (auto& p : out.points) {
        p.mean += fraction * p.displacement;
        p.displacement = fraction == 1.0 ? Vec3::Zero() : Vec3((1.0 - fraction) * p.displacement);
    }
    return out;
}

LabeledSubset extract_subset(const GaussianField& field, std::uint8_t label, double min_opacity)
{
    LabeledSubset out;
    for (const auto& p : field.points) {
        if (p.label != label || p.opacity() < min_opacity) continue;
        out.positions.push_back(p.mean);
        out.future_positions.push_back(p.mean + p.displacement);
    }
    if (out.positions.empty()) {
        throw EmptySubsetError("no Gaussians carry label " + std::to_string(label) +
                               (min_opacity > 0.0 ? " at the requested opacity" : ""));
    }
    return out;
}

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'G', 'A', 'F', '1'};
constexpr std::size_t kHeaderBytes = 4 + 4 * 4;
constexpr std::size_t kRecordBytes = kParamsPerPoint * 4 + 1;

static_assert(std::endian::native == std::endian::little, "GAF1 I/O assumes a little-endian host");

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p)
{
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}

}  // namespace

std::vector<std::uint8_t> encode_field(const GaussianField& field)
{
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderBytes + field.size() * kRecordBytes);
    out.insert(out.end(), kMagic.begin(), kMagic.end());
    put_u32(out, kFieldFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(field.size()));
    put_u32(out, field.timestep);
    put_u32(out, field.interval);
    for (const auto& p : field.points) {
        for (double v : pack(p)) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        out.push_back(p.label);
    }
    return out;
}

GaussianField decode_field(const std::vector<std::uint8_t>& bytes)
{
    using Kind = FieldFormatError::Kind;
    if (bytes.size() < 4 || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
        throw FieldFormatError(Kind::Magic, "field file: bad magic");
    }
    if (bytes.size() < 8) throw FieldFormatError(Kind::Truncated, "field file: truncated header");
    const std::uint32_t version = get_u32(bytes.data() + 4);
    if (version != kFieldFormatVersion) {
        throw FieldFormatError(Kind::Version, "field file: unsupported version " + std::to_string(version));
    }
    if (bytes.size() < kHeaderBytes) throw FieldFormatError(Kind::Truncated, "field file: truncated header");
    const std::uint32_t count = get_u32(bytes.data() + 8);
    GaussianField field;
    field.timestep = get_u32(bytes.data() + 12);
    field.interval = get_u32(bytes.data() + 16);
    if (bytes.size() - kHeaderBytes < std::size_t(count) * kRecordBytes) {
        throw FieldFormatError(Kind::Truncated, "field file: truncated payload");
    }
    field.points.resize(count);
    const std::uint8_t* p = bytes.data() + kHeaderBytes;
    for (auto& pt : field.points) {
        PointParams v;
        for (int k = 0; k < kParamsPerPoint; ++k, p += 4) {
            v[k] = static_cast<double>(std::bit_cast<float>(get_u32(p)));
        }
        unpack(v, pt);
        pt.label = *p++;
    }
    return field;
}

void save_field(const std::filesystem::path& path, const GaussianField& field)
{
    const auto bytes = encode_field(field);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FieldFormatError(FieldFormatError::Kind::Io, "cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw FieldFormatError(FieldFormatError::Kind::Io, "write failed for " + path.string());
}

GaussianField load_field(const std::filesystem::path& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FieldFormatError(FieldFormatError::Kind::Io, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_field(bytes);
}

}  // namespace gaf
