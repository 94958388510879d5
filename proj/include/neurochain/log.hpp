#pragma once

namespace neurochain {

/// Sets the log level from NEUROCHAIN_LOG (trace, debug, info, warn, error,
/// off; default warn). Logs go to stderr.
void init_logging();

}  // namespace neurochain
