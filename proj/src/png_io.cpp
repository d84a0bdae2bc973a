#include "png_io.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "error.hpp"

namespace dmrf::tasks {

namespace {

std::uint32_t crc32(const std::uint8_t* data, std::size_t size, std::uint32_t crc = 0) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    crc ^= 0xffffffffu;
    for (std::size_t i = 0; i < size; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
    return crc ^ 0xffffffffu;
}

std::uint32_t adler32(const std::uint8_t* data, std::size_t size) {
    std::uint32_t a = 1, b = 0;
    for (std::size_t i = 0; i < size; ++i) {
        a = (a + data[i]) % 65521u;
        b = (b + a) % 65521u;
    }
    return (b << 16) | a;
}

// --- DEFLATE (RFC 1951) ------------------------------------------------

struct BitReader {
    const std::uint8_t* data;
    std::size_t size;
    std::size_t pos = 0;
    std::uint32_t bitbuf = 0;
    int bitcount = 0;

    std::uint32_t bits(int n) {
        while (bitcount < n) {
            require(pos < size, Status::Corrupt, "deflate: out of input");
            bitbuf |= static_cast<std::uint32_t>(data[pos++]) << bitcount;
            bitcount += 8;
        }
        const std::uint32_t v = bitbuf & ((1u << n) - 1u);
        bitbuf >>= n;
        bitcount -= n;
        return v;
    }

    void align() {
        bitbuf = 0;
        bitcount = 0;
    }
};

struct HuffTable {
    std::array<std::uint16_t, 16> count{};  // codes per bit length
    std::vector<std::uint16_t> symbols;     // symbols in canonical order
};

HuffTable build_huffman(const std::vector<std::uint8_t>& lengths) {
    HuffTable t;
    for (std::uint8_t len : lengths) t.count[len]++;
    t.count[0] = 0;
    std::array<std::uint16_t, 16> offsets{};
    for (int len = 1; len < 16; ++len) offsets[len] = offsets[len - 1] + t.count[len - 1];
    t.symbols.resize(lengths.size());
    std::uint16_t placed = 0;
    for (std::size_t sym = 0; sym < lengths.size(); ++sym) {
        if (lengths[sym] != 0) {
            t.symbols[offsets[lengths[sym]]++] = static_cast<std::uint16_t>(sym);
            ++placed;
        }
    }
    t.symbols.resize(placed);
    return t;
}

int decode_symbol(BitReader& br, const HuffTable& t) {
    int code = 0, first = 0, index = 0;
    for (int len = 1; len < 16; ++len) {
        code |= static_cast<int>(br.bits(1));
        const int count = t.count[len];
        if (code - first < count) return t.symbols[index + code - first];
        index += count;
        first = (first + count) << 1;
        code <<= 1;
    }
    throw Error(Status::Corrupt, "deflate: invalid huffman code");
}

constexpr std::uint16_t kLenBase[29] = {3,  4,  5,  6,  7,  8,  9,  10, 11,  13,  15,  17,  19, 23, 27,
                                        31, 35, 43, 51, 59, 67, 83, 99, 115, 131, 163, 195, 227, 258};
constexpr std::uint8_t kLenExtra[29] = {0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2,
                                        2, 3, 3, 3, 3, 4, 4, 4, 4, 5, 5, 5, 5, 0};
constexpr std::uint16_t kDistBase[30] = {1,    2,    3,    4,    5,    7,     9,     13,   17,   25,
                                         33,   49,   65,   97,   129,  193,   257,   385,  513,  769,
                                         1025, 1537, 2049, 3073, 4097, 6145,  8193,  12289, 16385, 24577};
constexpr std::uint8_t kDistExtra[30] = {0, 0, 0, 0, 1, 1, 2, 2, 3, 3, 4,  4,  5,  5,  6,
                                         6, 7, 7, 8, 8, 9, 9, 10, 10, 11, 11, 12, 12, 13, 13};

void inflate_block(BitReader& br, const HuffTable& litlen, const HuffTable& dist,
                   std::vector<std::uint8_t>& out) {
    for (;;) {
        const int sym = decode_symbol(br, litlen);
        if (sym < 256) {
            out.push_back(static_cast<std::uint8_t>(sym));
        } else if (sym == 256) {
            return;
        } else {
            require(sym <= 285, Status::Corrupt, "deflate: bad length symbol");
            const int li = sym - 257;
            const std::size_t length = kLenBase[li] + br.bits(kLenExtra[li]);
            const int dsym = decode_symbol(br, dist);
            require(dsym < 30, Status::Corrupt, "deflate: bad distance symbol");
            const std::size_t distance = kDistBase[dsym] + br.bits(kDistExtra[dsym]);
            require(distance <= out.size(), Status::Corrupt, "deflate: distance too far back");
            for (std::size_t i = 0; i < length; ++i) out.push_back(out[out.size() - distance]);
        }
    }
}

std::vector<std::uint8_t> inflate(const std::uint8_t* data, std::size_t size) {
    BitReader br{data, size};
    std::vector<std::uint8_t> out;
    for (;;) {
        const bool final = br.bits(1) != 0;
        const std::uint32_t type = br.bits(2);
        if (type == 0) {
            br.align();
            require(br.pos + 4 <= br.size, Status::Corrupt, "deflate: truncated stored block");
            const std::uint32_t len = data[br.pos] | (data[br.pos + 1] << 8);
            const std::uint32_t nlen = data[br.pos + 2] | (data[br.pos + 3] << 8);
            br.pos += 4;
            require((len ^ nlen) == 0xffffu, Status::Corrupt, "deflate: stored length check failed");
            require(br.pos + len <= br.size, Status::Corrupt, "deflate: truncated stored data");
            out.insert(out.end(), data + br.pos, data + br.pos + len);
            br.pos += len;
        } else if (type == 1) {
            std::vector<std::uint8_t> ll(288);
            for (int i = 0; i < 144; ++i) ll[i] = 8;
            for (int i = 144; i < 256; ++i) ll[i] = 9;
            for (int i = 256; i < 280; ++i) ll[i] = 7;
            for (int i = 280; i < 288; ++i) ll[i] = 8;
            std::vector<std::uint8_t> dd(30, 5);
            inflate_block(br, build_huffman(ll), build_huffman(dd), out);
        } else if (type == 2) {
            const int hlit = static_cast<int>(br.bits(5)) + 257;
            const int hdist = static_cast<int>(br.bits(5)) + 1;
            const int hclen = static_cast<int>(br.bits(4)) + 4;
            static constexpr int kClOrder[19] = {16, 17, 18, 0, 8, 7, 9, 6, 10, 5,
                                                 11, 4,  12, 3, 13, 2, 14, 1, 15};
            std::vector<std::uint8_t> cl(19, 0);
            for (int i = 0; i < hclen; ++i) cl[kClOrder[i]] = static_cast<std::uint8_t>(br.bits(3));
            const HuffTable cl_table = build_huffman(cl);

            std::vector<std::uint8_t> lengths;
            lengths.reserve(hlit + hdist);
            while (static_cast<int>(lengths.size()) < hlit + hdist) {
                const int sym = decode_symbol(br, cl_table);
                if (sym < 16) {
                    lengths.push_back(static_cast<std::uint8_t>(sym));
                } else if (sym == 16) {
                    require(!lengths.empty(), Status::Corrupt, "deflate: repeat with no prior length");
                    const int rep = 3 + static_cast<int>(br.bits(2));
                    lengths.insert(lengths.end(), rep, lengths.back());
                } else if (sym == 17) {
                    lengths.insert(lengths.end(), 3 + br.bits(3), 0);
                } else {
                    lengths.insert(lengths.end(), 11 + br.bits(7), 0);
                }
            }
            require(static_cast<int>(lengths.size()) == hlit + hdist, Status::Corrupt,
                    "deflate: code length overflow");
            std::vector<std::uint8_t> ll(lengths.begin(), lengths.begin() + hlit);
            std::vector<std::uint8_t> dd(lengths.begin() + hlit, lengths.end());
            inflate_block(br, build_huffman(ll), build_huffman(dd), out);
        } else {
            throw Error(Status::Corrupt, "deflate: reserved block type");
        }
        if (final) break;
    }
    return out;
}

// Stored (uncompressed) deflate blocks; enough for image payloads without a
// compression dependency.
std::vector<std::uint8_t> deflate_stored(const std::uint8_t* data, std::size_t size) {
    std::vector<std::uint8_t> out;
    std::size_t pos = 0;
    do {
        const std::size_t chunk = std::min<std::size_t>(size - pos, 65535);
        const bool final = pos + chunk == size;
        out.push_back(final ? 1 : 0);
        out.push_back(static_cast<std::uint8_t>(chunk & 0xff));
        out.push_back(static_cast<std::uint8_t>(chunk >> 8));
        out.push_back(static_cast<std::uint8_t>(~chunk & 0xff));
        out.push_back(static_cast<std::uint8_t>((~chunk >> 8) & 0xff));
        out.insert(out.end(), data + pos, data + pos + chunk);
        pos += chunk;
    } while (pos < size);
    return out;
}

std::vector<std::uint8_t> zlib_deflate_stored(const std::uint8_t* data, std::size_t size) {
    std::vector<std::uint8_t> out{0x78, 0x01};
    std::vector<std::uint8_t> body = deflate_stored(data, size);
    out.insert(out.end(), body.begin(), body.end());
    const std::uint32_t ad = adler32(data, size);
    out.push_back(static_cast<std::uint8_t>(ad >> 24));
    out.push_back(static_cast<std::uint8_t>(ad >> 16));
    out.push_back(static_cast<std::uint8_t>(ad >> 8));
    out.push_back(static_cast<std::uint8_t>(ad));
    return out;
}

// --- PNG ---------------------------------------------------------------

constexpr std::uint8_t kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

std::uint32_t read_be32(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | p[3];
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::vector<std::uint8_t>& payload) {
    put_be32(out, static_cast<std::uint32_t>(payload.size()));
    std::vector<std::uint8_t> crc_input(type, type + 4);
    crc_input.insert(crc_input.end(), payload.begin(), payload.end());
    out.insert(out.end(), crc_input.begin(), crc_input.end());
    put_be32(out, crc32(crc_input.data(), crc_input.size()));
}

std::uint8_t paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return static_cast<std::uint8_t>(a);
    if (pb <= pc) return static_cast<std::uint8_t>(b);
    return static_cast<std::uint8_t>(c);
}

} // namespace

std::vector<std::uint8_t> zlib_inflate(const std::uint8_t* data, std::size_t size) {
    require(size >= 6, Status::Corrupt, "zlib: stream too short");
    const std::uint8_t cmf = data[0], flg = data[1];
    require((cmf & 0x0f) == 8, Status::Format, "zlib: unsupported compression method");
    require(((cmf << 8) | flg) % 31 == 0, Status::Corrupt, "zlib: bad header check");
    require((flg & 0x20) == 0, Status::Format, "zlib: preset dictionary unsupported");
    std::vector<std::uint8_t> out = inflate(data + 2, size - 6);
    const std::uint32_t expect = read_be32(data + size - 4);
    require(adler32(out.data(), out.size()) == expect, Status::Corrupt, "zlib: adler32 mismatch");
    return out;
}

ImageBuffer decode_png(const std::vector<std::uint8_t>& bytes) {
    require(bytes.size() > 8 && std::memcmp(bytes.data(), kSignature, 8) == 0, Status::Format,
            "png: bad signature");
    std::size_t pos = 8;
    int width = 0, height = 0, channels_in = 0;
    bool have_ihdr = false, have_iend = false;
    std::vector<std::uint8_t> idat;

    while (pos < bytes.size()) {
        require(pos + 8 <= bytes.size(), Status::Corrupt, "png: truncated chunk header");
        const std::uint32_t len = read_be32(bytes.data() + pos);
        require(pos + 12 + len <= bytes.size(), Status::Corrupt, "png: truncated chunk");
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const std::uint8_t* payload = bytes.data() + pos + 8;
        const std::uint32_t crc_expect = read_be32(bytes.data() + pos + 8 + len);
        require(crc32(bytes.data() + pos + 4, len + 4) == crc_expect, Status::Corrupt,
                "png: chunk crc mismatch");

        if (std::memcmp(type, "IHDR", 4) == 0) {
            require(len == 13, Status::Corrupt, "png: bad IHDR length");
            width = static_cast<int>(read_be32(payload));
            height = static_cast<int>(read_be32(payload + 4));
            const int bit_depth = payload[8];
            const int color_type = payload[9];
            const int interlace = payload[12];
            require(bit_depth == 8, Status::Format, "png: only 8-bit depth supported");
            require(interlace == 0, Status::Format, "png: interlaced images unsupported");
            switch (color_type) {
                case 0: channels_in = 1; break;
                case 2: channels_in = 3; break;
                case 4: channels_in = 2; break;
                case 6: channels_in = 4; break;
                default: throw Error(Status::Format, "png: palette images unsupported");
            }
            require(width >= 1 && height >= 1, Status::Corrupt, "png: bad dimensions");
            have_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            require(have_ihdr, Status::Corrupt, "png: IDAT before IHDR");
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            have_iend = true;
            break;
        }
        // Ancillary chunks are skipped.
        pos += 12 + len;
    }
    require(have_ihdr && have_iend && !idat.empty(), Status::Corrupt, "png: missing mandatory chunks");

    const std::vector<std::uint8_t> raw = zlib_inflate(idat.data(), idat.size());
    const std::size_t stride = static_cast<std::size_t>(width) * channels_in;
    require(raw.size() == (stride + 1) * static_cast<std::size_t>(height), Status::Corrupt,
            "png: decompressed size mismatch");

    std::vector<std::uint8_t> pixels(stride * height);
    std::vector<std::uint8_t> prior(stride, 0);
    const int bpp = channels_in;
    for (int r = 0; r < height; ++r) {
        const std::uint8_t filter = raw[r * (stride + 1)];
        const std::uint8_t* src = raw.data() + r * (stride + 1) + 1;
        std::uint8_t* dst = pixels.data() + r * stride;
        for (std::size_t i = 0; i < stride; ++i) {
            const int left = i >= static_cast<std::size_t>(bpp) ? dst[i - bpp] : 0;
            const int up = prior[i];
            const int upleft = i >= static_cast<std::size_t>(bpp) ? prior[i - bpp] : 0;
            int v = src[i];
            switch (filter) {
                case 0: break;
                case 1: v += left; break;
                case 2: v += up; break;
                case 3: v += (left + up) / 2; break;
                case 4: v += paeth(left, up, upleft); break;
                default: throw Error(Status::Corrupt, "png: unknown filter type");
            }
            dst[i] = static_cast<std::uint8_t>(v & 0xff);
        }
        std::memcpy(prior.data(), dst, stride);
    }

    const int channels_out = channels_in <= 2 ? 1 : 3;
    ImageBuffer img(height, width, channels_out);
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c)
            for (int ch = 0; ch < channels_out; ++ch)
                img.at(r, c, ch) =
                    static_cast<float>(pixels[r * stride + c * channels_in + ch]) / 255.0f;
    return img;
}

std::vector<std::uint8_t> encode_png(const ImageBuffer& img) {
    const std::vector<std::uint8_t> bytes = to_bytes(img);
    const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
    std::vector<std::uint8_t> raw;
    raw.reserve((stride + 1) * img.height);
    for (int r = 0; r < img.height; ++r) {
        raw.push_back(0);  // filter: None
        raw.insert(raw.end(), bytes.begin() + r * stride, bytes.begin() + (r + 1) * stride);
    }

    std::vector<std::uint8_t> out(kSignature, kSignature + 8);
    std::vector<std::uint8_t> ihdr;
    put_be32(ihdr, static_cast<std::uint32_t>(img.width));
    put_be32(ihdr, static_cast<std::uint32_t>(img.height));
    ihdr.push_back(8);                              // bit depth
    ihdr.push_back(img.channels == 1 ? 0 : 2);      // color type
    ihdr.push_back(0);                              // compression
    ihdr.push_back(0);                              // filter method
    ihdr.push_back(0);                              // interlace
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", zlib_deflate_stored(raw.data(), raw.size()));
    append_chunk(out, "IEND", {});
    return out;
}

ImageBuffer read_png(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), Status::Io, "cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    try {
        return decode_png(bytes);
    } catch (const Error& e) {
        throw Error(e.code(), std::string(e.what()) + " in " + path);
    }
}

void write_png(const ImageBuffer& img, const std::string& path) {
    const std::vector<std::uint8_t> bytes = encode_png(img);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), Status::Io, "cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(out.good(), Status::Io, "short write to " + path);
}

} // namespace dmrf::tasks
