#include "nrd/io.h"

#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <limits>

namespace nrd {

namespace {

constexpr std::int64_t kMaxElements = std::int64_t(1) << 33;

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

class ByteReader {
public:
    ByteReader(const std::vector<std::uint8_t>& bytes, std::size_t pos) : bytes_(bytes), pos_(pos) {}

    std::uint8_t u8() {
        need(1);
        return bytes_[pos_++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    void raw(void* dst, std::size_t n) {
        need(n);
        std::memcpy(dst, bytes_.data() + pos_, n);
        pos_ += n;
    }
    std::size_t pos() const { return pos_; }

private:
    void need(std::size_t n) {
        if (pos_ + n > bytes_.size()) throw FormatError("truncated record");
    }
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_;
};

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot open file: " + path);
    f.seekg(0, std::ios::end);
    auto size = f.tellg();
    f.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
    if (size > 0) f.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!f) throw FormatError("failed reading file: " + path);
    return bytes;
}

void write_file(const std::vector<std::uint8_t>& bytes, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ValidationError("cannot open file for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw ValidationError("write failed: " + path);
}

} // namespace

void encode_tensor(const AnyTensor& t, std::vector<std::uint8_t>& out) {
    out.push_back('N');
    out.push_back('R');
    out.push_back('D');
    out.push_back('T');
    put_u8(out, 1);
    put_u8(out, static_cast<std::uint8_t>(t.dtype()));
    const Shape& shape = t.shape();
    check_contract(shape.size() <= 255, "too many dimensions");
    put_u8(out, static_cast<std::uint8_t>(shape.size()));
    put_u8(out, 0);
    for (int e : shape) {
        check_contract(e > 0 && static_cast<std::uint64_t>(e) <= std::numeric_limits<std::uint32_t>::max(),
                       "extent out of range");
        put_u32(out, static_cast<std::uint32_t>(e));
    }
    if (t.is_f32()) {
        for (float v : t.f32().data) put_u32(out, std::bit_cast<std::uint32_t>(v));
    } else {
        for (double v : t.f64().data) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
}

AnyTensor decode_tensor(const std::vector<std::uint8_t>& bytes, std::size_t& pos) {
    ByteReader r(bytes, pos);
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, "NRDT", 4) != 0) throw FormatError("bad magic, expected NRDT");
    std::uint8_t version = r.u8();
    if (version != 1) throw FormatError("unsupported NRDT version " + std::to_string(version));
    std::uint8_t dtype_code = r.u8();
    if (dtype_code > 1) throw FormatError("unknown dtype code " + std::to_string(dtype_code));
    std::uint8_t ndim = r.u8();
    r.u8(); // pad
    Shape shape(ndim);
    std::int64_t count = 1;
    for (int i = 0; i < ndim; ++i) {
        std::uint32_t e = r.u32();
        if (e == 0) throw FormatError("zero extent");
        count *= e;
        if (count > kMaxElements) throw FormatError("extent overflow");
        shape[static_cast<std::size_t>(i)] = static_cast<int>(e);
    }
    AnyTensor result;
    if (dtype_code == 0) {
        TensorF t(shape);
        for (auto& v : t.data) {
            std::uint32_t bits = r.u32();
            v = std::bit_cast<float>(bits);
        }
        result = AnyTensor(std::move(t));
    } else {
        TensorD t(shape);
        for (auto& v : t.data) {
            std::uint64_t bits = r.u64();
            v = std::bit_cast<double>(bits);
        }
        result = AnyTensor(std::move(t));
    }
    pos = r.pos();
    return result;
}

void write_tensor(const AnyTensor& t, const std::string& path) {
    std::vector<std::uint8_t> bytes;
    encode_tensor(t, bytes);
    write_file(bytes, path);
}

AnyTensor read_tensor(const std::string& path) {
    std::vector<std::uint8_t> bytes = read_file(path);
    std::size_t pos = 0;
    AnyTensor t = decode_tensor(bytes, pos);
    if (pos != bytes.size()) throw FormatError("trailing bytes after tensor record: " + path);
    return t;
}

void write_bundle(const NamedTensorBundle& b, const std::string& path) {
    std::vector<std::uint8_t> bytes;
    bytes.push_back('N');
    bytes.push_back('R');
    bytes.push_back('D');
    bytes.push_back('B');
    check_contract(b.size() <= std::numeric_limits<std::uint32_t>::max(), "too many entries");
    put_u32(bytes, static_cast<std::uint32_t>(b.size()));
    for (std::size_t i = 0; i < b.size(); ++i) {
        const auto& [name, tensor] = b.entry(i);
        check_contract(name.size() <= std::numeric_limits<std::uint16_t>::max(), "entry name too long");
        put_u16(bytes, static_cast<std::uint16_t>(name.size()));
        bytes.insert(bytes.end(), name.begin(), name.end());
        encode_tensor(tensor, bytes);
    }
    write_file(bytes, path);
}

NamedTensorBundle read_bundle(const std::string& path) {
    std::vector<std::uint8_t> bytes = read_file(path);
    ByteReader r(bytes, 0);
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, "NRDB", 4) != 0) throw FormatError("bad magic, expected NRDB: " + path);
    std::uint32_t count = r.u32();
    NamedTensorBundle b;
    std::size_t pos = r.pos();
    for (std::uint32_t i = 0; i < count; ++i) {
        ByteReader hr(bytes, pos);
        std::uint16_t len = hr.u16();
        std::string name(len, '\0');
        hr.raw(name.data(), len);
        pos = hr.pos();
        AnyTensor t = decode_tensor(bytes, pos);
        b.add(name, std::move(t));
    }
    if (pos != bytes.size()) throw FormatError("trailing bytes after bundle: " + path);
    return b;
}

namespace {

int parse_pnm_int(ByteReader& r) {
    // Skips whitespace and '#' comments, then reads a decimal token.
    int c = r.u8();
    for (;;) {
        if (c == '#') {
            while (c != '\n') c = r.u8();
        } else if (std::isspace(c)) {
            c = r.u8();
        } else {
            break;
        }
    }
    if (!std::isdigit(c)) throw FormatError("malformed PNM header");
    long v = 0;
    while (std::isdigit(c)) {
        v = v * 10 + (c - '0');
        if (v > std::numeric_limits<int>::max()) throw FormatError("PNM extent overflow");
        c = r.u8();
    }
    if (!std::isspace(c)) throw FormatError("malformed PNM header");
    return static_cast<int>(v);
}

} // namespace

void write_pgm(const LabelMap& labels, const std::string& path) {
    std::vector<std::uint8_t> bytes;
    std::string header = "P5\n" + std::to_string(labels.width) + " " + std::to_string(labels.height) + "\n255\n";
    bytes.insert(bytes.end(), header.begin(), header.end());
    bytes.insert(bytes.end(), labels.values.begin(), labels.values.end());
    write_file(bytes, path);
}

LabelMap read_pgm(const std::string& path) {
    std::vector<std::uint8_t> bytes = read_file(path);
    ByteReader r(bytes, 0);
    char magic[2];
    r.raw(magic, 2);
    if (magic[0] != 'P' || magic[1] != '5') throw FormatError("expected binary PGM (P5): " + path);
    int w = parse_pnm_int(r);
    int h = parse_pnm_int(r);
    int maxval = parse_pnm_int(r);
    if (maxval != 255) throw FormatError("unsupported PGM maxval " + std::to_string(maxval));
    if (w <= 0 || h <= 0) throw FormatError("bad PGM extents");
    LabelMap labels(h, w);
    r.raw(labels.values.data(), labels.values.size());
    return labels;
}

const std::array<Rgb, 20>& class_palette() {
    // 20 distinguishable colors, fixed forever; index = class id.
    static const std::array<Rgb, 20> table = {{
        {70, 70, 70},    // 0: dark gray
        {220, 20, 60},   // 1: crimson
        {0, 128, 0},     // 2: green
        {30, 100, 220},  // 3: blue
        {255, 200, 0},   // 4: amber
        {160, 32, 240},  // 5: purple
        {255, 128, 0},   // 6: orange
        {0, 220, 220},   // 7: cyan
        {250, 110, 180}, // 8: pink
        {128, 128, 0},   // 9: olive
        {0, 80, 100},    // 10: petrol
        {190, 255, 80},  // 11: lime
        {128, 64, 30},   // 12: brown
        {255, 255, 255}, // 13: white
        {100, 160, 255}, // 14: light blue
        {200, 0, 140},   // 15: magenta
        {90, 220, 130},  // 16: mint
        {250, 230, 180}, // 17: sand
        {120, 10, 40},   // 18: maroon
        {170, 170, 255}, // 19: lavender
    }};
    return table;
}

void write_ppm(const LabelMap& labels, const std::string& path) {
    const auto& palette = class_palette();
    std::vector<std::uint8_t> bytes;
    std::string header = "P6\n" + std::to_string(labels.width) + " " + std::to_string(labels.height) + "\n255\n";
    bytes.insert(bytes.end(), header.begin(), header.end());
    for (std::uint8_t v : labels.values) {
        if (v == kIgnoreLabel) {
            bytes.push_back(0);
            bytes.push_back(0);
            bytes.push_back(0);
        } else {
            check_contract(v < palette.size(), "class id " + std::to_string(v) + " has no palette entry");
            const Rgb& c = palette[v];
            bytes.push_back(c[0]);
            bytes.push_back(c[1]);
            bytes.push_back(c[2]);
        }
    }
    write_file(bytes, path);
}

} // namespace nrd
