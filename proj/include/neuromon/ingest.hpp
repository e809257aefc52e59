#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace neuromon {

struct ActivationFrame {
    std::uint64_t stream_id = 0;
    std::uint64_t token_index = 0;
    bool step_end = false;       // token completes a "\n\n" separator
    bool end_of_stream = false;  // explicit sentinel, carries no channels
    std::vector<double> values;
    std::string token_text;  // optional, kept by the text format only
};

enum class TraceFormat { binary, text };

/// Record serialization shared by the file and wire formats.
std::vector<std::uint8_t> encode_frame(const ActivationFrame& frame);
ActivationFrame decode_frame(const std::uint8_t* data, std::size_t size,
                             std::size_t base_offset = 0);

class TraceWriter {
public:
    TraceWriter(const std::filesystem::path& path, TraceFormat format);
    ~TraceWriter();

    void write(const ActivationFrame& frame);
    /// Writes the end-of-stream sentinel and closes the file.
    void finish(std::uint64_t stream_id);

private:
    std::ofstream out_;
    TraceFormat format_;
    bool finished_ = false;
};

/// Validating reader: monotone token indices, constant channel count, finite
/// values. Errors carry the byte offset of the offending record.
class TraceReader {
public:
    TraceReader(const std::filesystem::path& path, TraceFormat format);

    /// Next frame, including the final sentinel; nullopt after it.
    /// A file ending without a sentinel raises a parse error.
    std::optional<ActivationFrame> next();

private:
    std::ifstream in_;
    TraceFormat format_;
    std::size_t offset_ = 0;
    bool saw_sentinel_ = false;
    bool first_ = true;
    std::uint64_t last_index_ = 0;
    std::size_t channel_count_ = 0;
};

/// Incremental "\n\n" detector across token boundaries.
class StepFlagScanner {
public:
    /// True when the token completes at least one "\n\n" occurrence.
    bool feed(const std::string& token);

private:
    char prev_ = '\0';
};

std::vector<bool> derive_step_flags(const std::vector<std::string>& tokens);

// ---- framed TCP transport ----
//
// Inbound: u32 LE length prefix + encoded frame record.
// Outbound: u32 LE length prefix + UTF-8 structured-text directive.
// The server answers every step-end frame and the sentinel with exactly one
// message (a directive or an empty acknowledgement), giving the producer a
// synchronous checkpoint at step separators.

class StreamServer {
public:
    /// Return the directive text to send at a checkpoint, or empty for an ack.
    using FrameHandler = std::function<std::string(const ActivationFrame&)>;
    /// `clean` is false when the peer vanished without a sentinel.
    using CloseHandler = std::function<void(std::uint64_t stream_id, bool clean)>;

    StreamServer(FrameHandler on_frame, CloseHandler on_close);
    ~StreamServer();

    /// Binds an ephemeral loopback port and starts accepting.
    void start();
    void stop();
    std::uint16_t port() const { return port_; }

private:
    void accept_loop();
    void session(int fd);

    FrameHandler on_frame_;
    CloseHandler on_close_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::thread acceptor_;
    std::vector<std::thread> sessions_;
};

class StreamClient {
public:
    StreamClient(const std::string& host, std::uint16_t port);
    ~StreamClient();

    /// Sends one frame; at step-end frames and the sentinel, blocks for the
    /// checkpoint response and returns the directive (empty string for ack).
    std::optional<std::string> send(const ActivationFrame& frame);

    void close();

private:
    int fd_ = -1;
};

}  // namespace neuromon
