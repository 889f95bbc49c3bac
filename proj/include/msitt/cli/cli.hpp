/*
 * Copyright 2026 The msitt Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

namespace msitt {

/// Entry point of the `msitt` tool. Subcommands: gen, curate, pretrain-text,
/// align, finetune, eval, ablate, analyze, backtest and rerun. Relative
/// default paths resolve under --data, which defaults to $MSITT_DATA_DIR or
/// the working directory. Returns 0 on success, 2 on a usage error and 1
/// when a command fails.
int run_cli(int argc, const char* const* argv);

}  // namespace msitt
