#pragma once

// Shared I/O primitives: error taxonomy, the text-header + binary-payload
// container used by dataset and checkpoint files, and lossless decimal
// formatting for CSV output.

#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fdialab {

// Could not open/read/write at the OS level.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File opened fine but is not the expected format (bad magic, bad version,
// unknown field).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Recognized format but the content is damaged (truncated payload,
// inconsistent counts).
struct CorruptFileError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string format_double(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, p);
}

// ---------------------------------------------------------------------------
// Text header block: "key value" lines terminated by a single "end" line,
// followed (optionally) by a raw little-endian binary payload.

class HeaderWriter {
public:
    explicit HeaderWriter(std::string magic) { lines_.push_back(std::move(magic)); }

    void field(const std::string& key, const std::string& value) {
        lines_.push_back(key + " " + value);
    }
    void field(const std::string& key, std::uint64_t value) { field(key, std::to_string(value)); }
    void field(const std::string& key, std::int64_t value) { field(key, std::to_string(value)); }
    void field(const std::string& key, int value) { field(key, std::to_string(value)); }
    void field(const std::string& key, double value) { field(key, format_double(value)); }

    void write(std::ostream& out) const {
        for (const auto& l : lines_) out << l << '\n';
        out << "end\n";
    }

private:
    std::vector<std::string> lines_;
};

class HeaderReader {
public:
    // Consumes the header from `in`, validating the magic line.
    HeaderReader(std::istream& in, const std::string& expected_magic) {
        std::string line;
        if (!std::getline(in, line))
            throw FormatError("empty file, expected header '" + expected_magic + "'");
        if (line != expected_magic)
            throw FormatError("bad magic '" + line + "', expected '" + expected_magic + "'");
        while (std::getline(in, line)) {
            if (line == "end") return;
            auto sp = line.find(' ');
            if (sp == std::string::npos)
                throw FormatError("malformed header line '" + line + "'");
            fields_[line.substr(0, sp)] = line.substr(sp + 1);
        }
        throw CorruptFileError("header not terminated by 'end'");
    }

    bool has(const std::string& key) const { return fields_.count(key) != 0; }

    const std::string& get(const std::string& key) const {
        auto it = fields_.find(key);
        if (it == fields_.end()) throw FormatError("missing header field '" + key + "'");
        return it->second;
    }
    std::uint64_t get_u64(const std::string& key) const {
        return std::stoull(get(key));
    }
    std::int64_t get_i64(const std::string& key) const { return std::stoll(get(key)); }
    double get_double(const std::string& key) const { return std::stod(get(key)); }

private:
    std::map<std::string, std::string> fields_;
};

// ---------------------------------------------------------------------------
// Binary payload helpers (host is little-endian on every supported target).

inline void write_doubles(std::ostream& out, const double* data, std::size_t n) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
}

inline void read_doubles(std::istream& in, double* data, std::size_t n, const char* what) {
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != n * sizeof(double))
        throw CorruptFileError(std::string("truncated payload while reading ") + what);
}

inline void write_u64s(std::ostream& out, const std::uint64_t* data, std::size_t n) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(std::uint64_t)));
}

inline void read_u64s(std::istream& in, std::uint64_t* data, std::size_t n, const char* what) {
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(std::uint64_t)));
    if (static_cast<std::size_t>(in.gcount()) != n * sizeof(std::uint64_t))
        throw CorruptFileError(std::string("truncated payload while reading ") + what);
}

inline std::ofstream open_for_write(const std::string& path, bool binary = true) {
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    return out;
}

inline std::ifstream open_for_read(const std::string& path, bool binary = true) {
    std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return in;
}

}  // namespace fdialab
