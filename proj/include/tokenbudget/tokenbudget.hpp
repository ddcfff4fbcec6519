#pragma once

#include "tokenbudget/chat_protocol.hpp"
#include "tokenbudget/difficulty.hpp"
#include "tokenbudget/engine.hpp"
#include "tokenbudget/fake_endpoint.hpp"
#include "tokenbudget/graders.hpp"
#include "tokenbudget/harness.hpp"
#include "tokenbudget/hash.hpp"
#include "tokenbudget/metrics.hpp"
#include "tokenbudget/mock_model.hpp"
#include "tokenbudget/model.hpp"
#include "tokenbudget/prompts.hpp"
#include "tokenbudget/remote_model.hpp"
#include "tokenbudget/run_log.hpp"
#include "tokenbudget/toy.hpp"
#include "tokenbudget/types.hpp"
