#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "lmcal/encoder.hpp"
#include "lmcal/error.hpp"
#include "lmcal/serialize.hpp"

namespace lmcal {

namespace {

constexpr char kMagic[8] = {'L', 'M', 'C', 'A', 'L', 'C', 'K', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

} // namespace

void round_to_float32(ParameterStore& params) {
    for (const auto& name : params.names())
        for (auto& v : params.at(name).data) v = static_cast<double>(static_cast<float>(v));
}

void save_checkpoint(const ParameterStore& params, const std::filesystem::path& path,
                     const std::map<std::string, std::string>& metadata) {
    nlohmann::json header;
    header["format"] = "lmcal-checkpoint";
    header["version"] = 1;
    header["config"] = params.config();
    header["attachments"] = params.attachments();
    header["metadata"] = metadata;
    auto arrays = nlohmann::json::array();
    for (const auto& [name, entry] : params.arrays())
        arrays.push_back({{"name", name}, {"shape", entry.value.shape}, {"trainable", entry.trainable}});
    header["arrays"] = arrays;
    const std::string text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path.string());
    out.write(kMagic, sizeof kMagic);
    write_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    std::vector<float> buf;
    for (const auto& [_, entry] : params.arrays()) {
        buf.assign(entry.value.data.begin(), entry.value.data.end());
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!out) throw IoError("checkpoint write failed: " + path.string());
}

ParameterStore load_checkpoint(const std::filesystem::path& path, std::map<std::string, std::string>* metadata) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    char magic[8] = {};
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw IoError("not an lmcal checkpoint: " + path.string());
    const std::uint64_t len = read_u64(in);
    if (!in || len > (1u << 30)) throw IoError("corrupt checkpoint header: " + path.string());
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw IoError("truncated checkpoint header: " + path.string());

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("checkpoint header is not valid JSON: " + std::string(e.what()));
    }
    ParameterStore params(header.at("config").get<EncoderConfig>());
    params.attachments() = header.at("attachments").get<Attachments>();
    if (metadata) *metadata = header.value("metadata", std::map<std::string, std::string>{});
    std::vector<float> buf;
    for (const auto& a : header.at("arrays")) {
        Tensor t(a.at("shape").get<std::vector<std::size_t>>());
        buf.resize(t.size());
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
        if (!in) throw IoError("truncated checkpoint payload: " + path.string());
        std::copy(buf.begin(), buf.end(), t.data.begin());
        params.add(a.at("name").get<std::string>(), std::move(t), a.at("trainable").get<bool>());
    }
    if (in.peek() != std::char_traits<char>::eof()) throw IoError("trailing bytes in checkpoint: " + path.string());
    return params;
}

} // namespace lmcal
