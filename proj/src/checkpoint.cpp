#include "hzrd/checkpoint.hpp"

#include "binary_io.hpp"

#include <fstream>
#include <iterator>

namespace hzrd {

namespace detail {

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(DataError::Code::Io, "cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(DataError::Code::Io, "cannot write '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError(DataError::Code::Io, "write failed for '" + path + "'");
}

}  // namespace detail

namespace {

using Code = DataError::Code;
constexpr std::string_view kMagic = "HZRD";

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const RiskModel& model) {
    detail::ByteWriter w;
    w.bytes(kMagic);
    w.u16(kCheckpointVersion);
    w.u8(static_cast<std::uint8_t>(model.kind()));

    std::uint8_t flags = 0;
    std::uint32_t hidden = 0;
    std::vector<std::size_t> widths;
    if (const auto* lstm = std::get_if<LstmRiskModel>(&model.variant())) {
        flags = lstm->skip_padding() ? 1 : 0;
        hidden = static_cast<std::uint32_t>(lstm->hidden());
    } else if (const auto* mlp = std::get_if<MlpRiskModel>(&model.variant())) {
        widths = mlp->widths();
    }
    w.u8(flags);
    w.u32(static_cast<std::uint32_t>(model.dimension()));
    w.u32(static_cast<std::uint32_t>(model.sequence_length()));
    w.u32(hidden);
    w.u32(static_cast<std::uint32_t>(widths.empty() ? 0 : widths.size() - 1));
    for (auto width : widths) w.u32(static_cast<std::uint32_t>(width));
    w.f64(model.dropout_rate());

    const Eigen::VectorXd& p = model.parameters();
    w.u64(static_cast<std::uint64_t>(p.size()));
    for (Eigen::Index i = 0; i < p.size(); ++i) w.f64(p[i]);
    return w.take();
}

RiskModel decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    detail::ByteReader r(bytes, "checkpoint");
    if (r.bytes(4) != kMagic) throw DataError(Code::CorruptHeader, "corrupt checkpoint header: bad magic");
    const std::uint16_t version = r.u16();
    if ((version >> 8) != (kCheckpointVersion >> 8))
        throw DataError(Code::UnsupportedVersion, "unsupported checkpoint version " + std::to_string(version >> 8));
    const std::uint8_t tag = r.u8();
    const std::uint8_t flags = r.u8();
    const std::size_t d = r.u32();
    const std::size_t seq_len = r.u32();
    const std::size_t hidden = r.u32();
    const std::size_t layers = r.u32();
    if (d == 0 || seq_len == 0 || layers > 1024) throw DataError(Code::CorruptHeader, "corrupt checkpoint dimensions");
    std::vector<std::size_t> widths(layers == 0 ? 0 : layers + 1);
    for (auto& width : widths) width = r.u32();
    const double dropout = r.f64();
    const std::uint64_t count = r.u64();
    if (count != r.remaining() / 8 || r.remaining() % 8 != 0)
        throw DataError(Code::CorruptHeader, "corrupt checkpoint: parameter count disagrees with payload");

    auto build = [&]() -> RiskModel {
        try {
            switch (static_cast<ModelKind>(tag)) {
                case ModelKind::Linear: return LinearRiskModel(d, seq_len);
                case ModelKind::Mlp: {
                    if (widths.size() < 2 || widths.front() != d * seq_len || widths.back() != 1)
                        throw DataError(Code::CorruptHeader, "corrupt checkpoint: MLP widths do not chain");
                    return MlpRiskModel(d, seq_len, {widths.begin() + 1, widths.end() - 1}, dropout);
                }
                case ModelKind::Lstm: return LstmRiskModel(d, seq_len, hidden, dropout, (flags & 1) != 0);
            }
        } catch (const std::invalid_argument& e) {
            throw DataError(Code::CorruptHeader, std::string("corrupt checkpoint: ") + e.what());
        }
        throw DataError(Code::CorruptHeader, "corrupt checkpoint: unknown model tag " + std::to_string(tag));
    };
    RiskModel model = build();
    if (model.parameter_count() != count)
        throw DataError(Code::CorruptHeader, "corrupt checkpoint: parameter count does not match architecture");
    Eigen::VectorXd p(static_cast<Eigen::Index>(count));
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = r.f64();
    model.set_parameters(p);
    return model;
}

void save_checkpoint(const RiskModel& model, const std::filesystem::path& path) {
    detail::write_file_bytes(path.string(), encode_checkpoint(model));
}

RiskModel load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(detail::read_file_bytes(path.string()));
}

}  // namespace hzrd
