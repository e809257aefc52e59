#include "neuromon/ingest.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cmath>
#include <cstring>

#include "json.hpp"
#include "neuromon/errors.hpp"

namespace neuromon {

namespace {

constexpr char kMagic[4] = {'N', 'R', 'M', 'N'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint8_t kFlagStepEnd = 0x01;
constexpr std::uint8_t kFlagEndOfStream = 0x02;
constexpr std::size_t kHeaderSize = 4 + 2 + 8 + 8 + 1 + 4;

template <typename T>
void append_le(std::vector<std::uint8_t>& out, T value) {
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(&value);
    out.insert(out.end(), bytes, bytes + sizeof(T));
}

template <typename T>
T take_le(const std::uint8_t* data, std::size_t& pos) {
    T value;
    std::memcpy(&value, data + pos, sizeof(T));
    pos += sizeof(T);
    return value;
}

}  // namespace

std::vector<std::uint8_t> encode_frame(const ActivationFrame& frame) {
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderSize + frame.values.size() * sizeof(double));
    out.insert(out.end(), kMagic, kMagic + 4);
    append_le(out, kVersion);
    append_le(out, frame.stream_id);
    append_le(out, frame.token_index);
    std::uint8_t flags = 0;
    if (frame.step_end) flags |= kFlagStepEnd;
    if (frame.end_of_stream) flags |= kFlagEndOfStream;
    append_le(out, flags);
    append_le(out, static_cast<std::uint32_t>(frame.end_of_stream ? 0 : frame.values.size()));
    if (!frame.end_of_stream) {
        for (double v : frame.values) append_le(out, v);
    }
    return out;
}

ActivationFrame decode_frame(const std::uint8_t* data, std::size_t size,
                             std::size_t base_offset) {
    if (size < kHeaderSize) {
        throw ParseError("truncated frame header", base_offset + size);
    }
    if (std::memcmp(data, kMagic, 4) != 0) {
        throw ParseError("bad frame magic", base_offset);
    }
    std::size_t pos = 4;
    if (take_le<std::uint16_t>(data, pos) != kVersion) {
        throw ParseError("unsupported frame version", base_offset + 4);
    }
    ActivationFrame frame;
    frame.stream_id = take_le<std::uint64_t>(data, pos);
    frame.token_index = take_le<std::uint64_t>(data, pos);
    const auto flags = take_le<std::uint8_t>(data, pos);
    frame.step_end = flags & kFlagStepEnd;
    frame.end_of_stream = flags & kFlagEndOfStream;
    const auto channels = take_le<std::uint32_t>(data, pos);
    if (size != kHeaderSize + channels * sizeof(double)) {
        throw ParseError("frame length does not match channel count", base_offset + size);
    }
    frame.values.resize(channels);
    for (auto& v : frame.values) v = take_le<double>(data, pos);
    return frame;
}

// ---- file formats ----

TraceWriter::TraceWriter(const std::filesystem::path& path, TraceFormat format)
    : out_(path, format == TraceFormat::binary ? std::ios::binary : std::ios::out),
      format_(format) {
    if (!out_) throw IoError("cannot write " + path.string());
}

TraceWriter::~TraceWriter() = default;

void TraceWriter::write(const ActivationFrame& frame) {
    if (finished_) throw ProtocolError("write after end-of-stream");
    if (format_ == TraceFormat::binary) {
        const auto bytes = encode_frame(frame);
        out_.write(reinterpret_cast<const char*>(bytes.data()),
                   static_cast<std::streamsize>(bytes.size()));
    } else {
        nlohmann::json record;
        record["stream"] = frame.stream_id;
        record["t"] = frame.token_index;
        record["step_end"] = frame.step_end;
        record["values"] = frame.values;
        if (!frame.token_text.empty()) record["text"] = frame.token_text;
        out_ << record.dump() << "\n";
    }
    if (!out_) throw IoError("trace write failed");
}

void TraceWriter::finish(std::uint64_t stream_id) {
    ActivationFrame sentinel;
    sentinel.stream_id = stream_id;
    sentinel.end_of_stream = true;
    if (format_ == TraceFormat::binary) {
        const auto bytes = encode_frame(sentinel);
        out_.write(reinterpret_cast<const char*>(bytes.data()),
                   static_cast<std::streamsize>(bytes.size()));
    } else {
        nlohmann::json record;
        record["stream"] = stream_id;
        record["end_of_stream"] = true;
        out_ << record.dump() << "\n";
    }
    finished_ = true;
    out_.close();
    if (out_.fail()) throw IoError("trace close failed");
}

TraceReader::TraceReader(const std::filesystem::path& path, TraceFormat format)
    : in_(path, format == TraceFormat::binary ? std::ios::binary : std::ios::in),
      format_(format) {
    if (!in_) throw IoError("cannot open " + path.string());
}

std::optional<ActivationFrame> TraceReader::next() {
    if (saw_sentinel_) return std::nullopt;

    ActivationFrame frame;
    const std::size_t record_offset = offset_;
    if (format_ == TraceFormat::binary) {
        std::uint8_t header[kHeaderSize];
        in_.read(reinterpret_cast<char*>(header), kHeaderSize);
        if (in_.gcount() == 0 && in_.eof()) {
            throw ParseError("file ends without an end-of-stream sentinel", offset_);
        }
        if (static_cast<std::size_t>(in_.gcount()) < kHeaderSize) {
            throw ParseError("truncated frame header",
                             offset_ + static_cast<std::size_t>(in_.gcount()));
        }
        if (std::memcmp(header, kMagic, 4) != 0) {
            throw ParseError("bad frame magic", offset_);
        }
        std::uint32_t channels;
        std::memcpy(&channels, header + kHeaderSize - 4, 4);
        if (channels > (1u << 24)) {
            throw ParseError("implausible channel count", offset_ + kHeaderSize - 4);
        }
        std::vector<std::uint8_t> record(header, header + kHeaderSize);
        record.resize(kHeaderSize + channels * sizeof(double));
        in_.read(reinterpret_cast<char*>(record.data() + kHeaderSize),
                 static_cast<std::streamsize>(channels * sizeof(double)));
        if (static_cast<std::size_t>(in_.gcount()) < channels * sizeof(double)) {
            throw ParseError("truncated frame payload",
                             offset_ + kHeaderSize + static_cast<std::size_t>(in_.gcount()));
        }
        frame = decode_frame(record.data(), record.size(), record_offset);
        offset_ += record.size();
    } else {
        std::string line;
        if (!std::getline(in_, line)) {
            throw ParseError("file ends without an end-of-stream sentinel", offset_);
        }
        offset_ += line.size() + 1;
        nlohmann::json record;
        try {
            record = nlohmann::json::parse(line);
            frame.stream_id = record.at("stream").get<std::uint64_t>();
            if (record.value("end_of_stream", false)) {
                frame.end_of_stream = true;
            } else {
                frame.token_index = record.at("t").get<std::uint64_t>();
                frame.step_end = record.value("step_end", false);
                frame.values = record.at("values").get<std::vector<double>>();
                frame.token_text = record.value("text", "");
            }
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("bad trace record: ") + e.what(), record_offset);
        }
    }

    if (frame.end_of_stream) {
        saw_sentinel_ = true;
        return frame;
    }
    for (double v : frame.values) {
        if (!std::isfinite(v)) throw ParseError("non-finite activation value", record_offset);
    }
    if (first_) {
        channel_count_ = frame.values.size();
        first_ = false;
    } else {
        if (frame.token_index <= last_index_) {
            throw ParseError("token index not strictly increasing", record_offset);
        }
        if (frame.values.size() != channel_count_) {
            throw ParseError("channel count changed mid-stream", record_offset);
        }
    }
    last_index_ = frame.token_index;
    return frame;
}

// ---- step flags ----

bool StepFlagScanner::feed(const std::string& token) {
    bool flag = false;
    for (char c : token) {
        if (prev_ == '\n' && c == '\n') flag = true;
        prev_ = c;
    }
    return flag;
}

std::vector<bool> derive_step_flags(const std::vector<std::string>& tokens) {
    StepFlagScanner scanner;
    std::vector<bool> out;
    out.reserve(tokens.size());
    for (const auto& token : tokens) out.push_back(scanner.feed(token));
    return out;
}

// ---- framed TCP transport ----

namespace {

bool read_full(int fd, void* buffer, std::size_t size) {
    auto* p = static_cast<std::uint8_t*>(buffer);
    while (size > 0) {
        const ssize_t n = ::read(fd, p, size);
        if (n <= 0) return false;
        p += n;
        size -= static_cast<std::size_t>(n);
    }
    return true;
}

void write_full(int fd, const void* buffer, std::size_t size) {
    const auto* p = static_cast<const std::uint8_t*>(buffer);
    while (size > 0) {
        const ssize_t n = ::write(fd, p, size);
        if (n <= 0) throw IoError("socket write failed");
        p += n;
        size -= static_cast<std::size_t>(n);
    }
}

void write_message(int fd, const void* payload, std::size_t size) {
    const std::uint32_t len = static_cast<std::uint32_t>(size);
    write_full(fd, &len, sizeof(len));
    if (size > 0) write_full(fd, payload, size);
}

}  // namespace

StreamServer::StreamServer(FrameHandler on_frame, CloseHandler on_close)
    : on_frame_(std::move(on_frame)), on_close_(std::move(on_close)) {}

StreamServer::~StreamServer() { stop(); }

void StreamServer::start() {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw IoError("socket creation failed");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
        ::listen(listen_fd_, 16) != 0) {
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw IoError("cannot bind loopback listener");
    }
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    acceptor_ = std::thread([this] { accept_loop(); });
}

void StreamServer::stop() {
    if (listen_fd_ >= 0) {
        ::shutdown(listen_fd_, SHUT_RDWR);
        ::close(listen_fd_);
        listen_fd_ = -1;
    }
    if (acceptor_.joinable()) acceptor_.join();
    for (auto& t : sessions_) {
        if (t.joinable()) t.join();
    }
    sessions_.clear();
}

void StreamServer::accept_loop() {
    while (true) {
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) break;  // listener closed
        sessions_.emplace_back([this, fd] { session(fd); });
    }
}

void StreamServer::session(int fd) {
    std::uint64_t stream_id = 0;
    bool clean = false;
    try {
        while (true) {
            std::uint32_t len;
            if (!read_full(fd, &len, sizeof(len))) break;  // peer vanished
            std::vector<std::uint8_t> payload(len);
            if (!read_full(fd, payload.data(), len)) break;
            const ActivationFrame frame = decode_frame(payload.data(), payload.size());
            stream_id = frame.stream_id;
            const std::string directive = on_frame_(frame);
            if (frame.step_end || frame.end_of_stream) {
                write_message(fd, directive.data(), directive.size());
            }
            if (frame.end_of_stream) {
                clean = true;
                break;
            }
        }
    } catch (const std::exception&) {
        // framing violation: fall through and report an unclean close
    }
    ::close(fd);
    if (on_close_) on_close_(stream_id, clean);
}

StreamClient::StreamClient(const std::string& host, std::uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw IoError("socket creation failed");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1 ||
        ::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(fd_);
        fd_ = -1;
        throw IoError("cannot connect to " + host);
    }
}

StreamClient::~StreamClient() { close(); }

std::optional<std::string> StreamClient::send(const ActivationFrame& frame) {
    if (fd_ < 0) throw ProtocolError("send on a closed stream");
    const auto bytes = encode_frame(frame);
    write_message(fd_, bytes.data(), bytes.size());
    if (!frame.step_end && !frame.end_of_stream) return std::nullopt;

    std::uint32_t len;
    if (!read_full(fd_, &len, sizeof(len))) {
        throw ProtocolError("checkpoint response missing");
    }
    std::string directive(len, '\0');
    if (len > 0 && !read_full(fd_, directive.data(), len)) {
        throw ProtocolError("truncated checkpoint response");
    }
    return directive;
}

void StreamClient::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

}  // namespace neuromon
