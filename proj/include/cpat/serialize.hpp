#pragma once

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "cpat/tensor.hpp"
#include "cpat/weights.hpp"

// Binary formats.
//
// Tensor dump ("CPT1"): magic, u8 dtype (0 = f32, 1 = f64), u8 rank, rank
// u32 little-endian dims, then the raw little-endian scalars.
//
// Weight store ("CPATW1"): magic, u32 entry count, then per entry a u16
// name length, the name bytes, u8 dtype, u8 rank, rank u32 dims and a u64
// byte offset into the blob section; the blob section is the concatenated
// tensor dumps in manifest order.

namespace cpat::io {

namespace detail {

inline void put_bytes(std::ostream& os, const void* p, size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void get_bytes(std::istream& is, void* p, size_t n, const char* what) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(is.gcount()) != n)
        throw DataError(cat("truncated ", what, " at offset ",
                            static_cast<long long>(is.tellg())));
}

inline void put_u16(std::ostream& os, uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                                static_cast<unsigned char>(v >> 8)};
    put_bytes(os, b, 2);
}

inline void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    put_bytes(os, b, 4);
}

inline void put_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    put_bytes(os, b, 8);
}

inline uint16_t get_u16(std::istream& is, const char* what) {
    unsigned char b[2];
    get_bytes(is, b, 2, what);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

inline uint32_t get_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    get_bytes(is, b, 4, what);
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

inline uint64_t get_u64(std::istream& is, const char* what) {
    unsigned char b[8];
    get_bytes(is, b, 8, what);
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

template <typename T>
void put_scalar(std::ostream& os, T v) {
    if constexpr (sizeof(T) == 4) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_u32(os, bits);
    } else {
        uint64_t bits;
        std::memcpy(&bits, &v, 8);
        put_u64(os, bits);
    }
}

template <typename T>
T get_scalar(std::istream& is, const char* what) {
    T v;
    if constexpr (sizeof(T) == 4) {
        const uint32_t bits = get_u32(is, what);
        std::memcpy(&v, &bits, 4);
    } else {
        const uint64_t bits = get_u64(is, what);
        std::memcpy(&v, &bits, 8);
    }
    return v;
}

} // namespace detail

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
    detail::put_bytes(os, "CPT1", 4);
    const unsigned char dtype = static_cast<unsigned char>(dtype_of<T>());
    const unsigned char rank = static_cast<unsigned char>(t.rank());
    detail::put_bytes(os, &dtype, 1);
    detail::put_bytes(os, &rank, 1);
    for (int64_t d = 0; d < t.rank(); ++d)
        detail::put_u32(os, static_cast<uint32_t>(t.dim(d)));
    for (int64_t i = 0; i < t.numel(); ++i) detail::put_scalar(os, t[i]);
}

template <typename T>
Tensor<T> read_tensor(std::istream& is) {
    char magic[4];
    detail::get_bytes(is, magic, 4, "tensor magic");
    if (std::memcmp(magic, "CPT1", 4) != 0)
        throw DataError("tensor dump: bad magic, expected CPT1");
    unsigned char dtype = 0, rank = 0;
    detail::get_bytes(is, &dtype, 1, "tensor dtype");
    detail::get_bytes(is, &rank, 1, "tensor rank");
    if (dtype != static_cast<unsigned char>(dtype_of<T>()))
        throw DataError(cat("tensor dump: dtype code ", int(dtype), " does not match requested ",
                            int(static_cast<unsigned char>(dtype_of<T>()))));
    std::vector<int64_t> shape(rank);
    int64_t numel = 1;
    for (int i = 0; i < rank; ++i) {
        shape[i] = detail::get_u32(is, "tensor dims");
        numel *= shape[i];
    }
    std::vector<T> data(static_cast<size_t>(numel));
    for (int64_t i = 0; i < numel; ++i) data[i] = detail::get_scalar<T>(is, "tensor data");
    return Tensor<T>(std::move(shape), std::move(data));
}

template <typename T>
void save_tensor(const std::string& path, const Tensor<T>& t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError(cat("cannot open '", path, "' for writing"));
    write_tensor(f, t);
    if (!f) throw DataError(cat("write failed for '", path, "'"));
}

template <typename T>
Tensor<T> load_tensor(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError(cat("cannot open '", path, "'"));
    return read_tensor<T>(f);
}

template <typename T>
void save_store(const std::string& path, const WeightStore<T>& store) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError(cat("cannot open '", path, "' for writing"));
    detail::put_bytes(f, "CPATW1", 6);
    detail::put_u32(f, static_cast<uint32_t>(store.size()));
    // tensor blob size: CPT1 header (6) + 4 per dim + payload
    uint64_t offset = 0;
    for (size_t i = 0; i < store.size(); ++i) {
        const auto& name = store.names()[i];
        const Tensor<T>& t = store.at(i);
        if (name.size() > 0xffff)
            throw DataError(cat("weight store: name too long: '", name, "'"));
        detail::put_u16(f, static_cast<uint16_t>(name.size()));
        detail::put_bytes(f, name.data(), name.size());
        const unsigned char dtype = static_cast<unsigned char>(dtype_of<T>());
        const unsigned char rank = static_cast<unsigned char>(t.rank());
        detail::put_bytes(f, &dtype, 1);
        detail::put_bytes(f, &rank, 1);
        for (int64_t d = 0; d < t.rank(); ++d)
            detail::put_u32(f, static_cast<uint32_t>(t.dim(d)));
        detail::put_u64(f, offset);
        offset += 6 + 4 * static_cast<uint64_t>(t.rank()) +
                  sizeof(T) * static_cast<uint64_t>(t.numel());
    }
    for (size_t i = 0; i < store.size(); ++i) write_tensor(f, store.at(i));
    if (!f) throw DataError(cat("write failed for '", path, "'"));
}

inline Dtype store_file_dtype(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError(cat("cannot open '", path, "'"));
    char magic[6];
    detail::get_bytes(f, magic, 6, "store magic");
    if (std::memcmp(magic, "CPATW1", 6) != 0)
        throw DataError(cat("weight file '", path, "': bad magic, expected CPATW1"));
    const uint32_t count = detail::get_u32(f, "store count");
    if (count == 0) throw DataError(cat("weight file '", path, "': empty store"));
    const uint16_t name_len = detail::get_u16(f, "entry name");
    std::string name(name_len, '\0');
    detail::get_bytes(f, name.data(), name_len, "entry name");
    unsigned char dtype = 0;
    detail::get_bytes(f, &dtype, 1, "entry dtype");
    if (dtype > 1) throw DataError(cat("weight file '", path, "': unknown dtype ", int(dtype)));
    return static_cast<Dtype>(dtype);
}

template <typename T>
WeightStore<T> load_store(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError(cat("cannot open '", path, "'"));
    char magic[6];
    detail::get_bytes(f, magic, 6, "store magic");
    if (std::memcmp(magic, "CPATW1", 6) != 0)
        throw DataError(cat("weight file '", path, "': bad magic, expected CPATW1"));
    const uint32_t count = detail::get_u32(f, "store count");

    struct Entry {
        std::string name;
        std::vector<int64_t> dims;
        uint64_t offset;
    };
    std::vector<Entry> entries;
    entries.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        Entry e;
        const uint16_t name_len = detail::get_u16(f, "entry name");
        e.name.resize(name_len);
        detail::get_bytes(f, e.name.data(), name_len, "entry name");
        unsigned char dtype = 0, rank = 0;
        detail::get_bytes(f, &dtype, 1, "entry dtype");
        detail::get_bytes(f, &rank, 1, "entry rank");
        if (dtype != static_cast<unsigned char>(dtype_of<T>()))
            throw DataError(cat("weight file '", path, "': parameter '", e.name,
                                "' has dtype code ", int(dtype), ", expected ",
                                int(static_cast<unsigned char>(dtype_of<T>()))));
        e.dims.resize(rank);
        for (int d = 0; d < rank; ++d) e.dims[d] = detail::get_u32(f, "entry dims");
        e.offset = detail::get_u64(f, "entry offset");
        entries.push_back(std::move(e));
    }

    const std::streampos blob_start = f.tellg();
    WeightStore<T> store;
    for (const Entry& e : entries) {
        f.seekg(blob_start + static_cast<std::streamoff>(e.offset));
        Tensor<T> t = read_tensor<T>(f);
        if (t.shape() != e.dims)
            throw DataError(cat("weight file '", path, "': parameter '", e.name,
                                "' blob shape ", shape_str(t.shape()),
                                " disagrees with manifest ", shape_str(e.dims)));
        store.add(e.name, std::move(t));
    }
    return store;
}

} // namespace cpat::io
