#include "dyntree/error.hpp"

namespace dyntree {

const char* to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::EmptyBuild: return "EmptyBuild";
        case ErrorCode::InvalidHandle: return "InvalidHandle";
        case ErrorCode::WouldEmpty: return "WouldEmpty";
        case ErrorCode::OutOfRange: return "OutOfRange";
        case ErrorCode::KeyOrder: return "KeyOrder";
        case ErrorCode::DuplicateKey: return "DuplicateKey";
        case ErrorCode::NotFound: return "NotFound";
        case ErrorCode::UseDelete: return "UseDelete";
        case ErrorCode::UseDecrement: return "UseDecrement";
        case ErrorCode::StructureCorrupt: return "StructureCorrupt";
        case ErrorCode::EmptyDistribution: return "EmptyDistribution";
        case ErrorCode::AlphabetTooSmall: return "AlphabetTooSmall";
        case ErrorCode::NotInAlphabet: return "NotInAlphabet";
        case ErrorCode::CorruptStream: return "CorruptStream";
        case ErrorCode::UnexpectedEof: return "UnexpectedEof";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::UsageError: return "UsageError";
    }
    return "Unknown";
}

}  // namespace dyntree
