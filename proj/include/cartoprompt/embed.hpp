#pragma once

#include "cartoprompt/embed/layer.hpp"
#include "cartoprompt/embed/lexicon.hpp"
#include "cartoprompt/embed/project.hpp"
