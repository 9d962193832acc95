#pragma once

#include "cartoprompt/service/cli.hpp"
#include "cartoprompt/service/config.hpp"
#include "cartoprompt/service/server.hpp"
#include "cartoprompt/service/store.hpp"
