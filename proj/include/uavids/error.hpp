#pragma once

#include <stdexcept>
#include <string>

namespace uavids {

/// Base class for all toolkit errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define UAVIDS_DEFINE_ERROR(Name)                                              \
    struct Name : Error {                                                      \
        using Error::Error;                                                    \
    }

UAVIDS_DEFINE_ERROR(NoClassesFound);
UAVIDS_DEFINE_ERROR(SchemaConflict);
UAVIDS_DEFINE_ERROR(IoFailure);
UAVIDS_DEFINE_ERROR(AllMissingColumn);
UAVIDS_DEFINE_ERROR(InvalidSpec);
UAVIDS_DEFINE_ERROR(SchemaMismatch);
UAVIDS_DEFINE_ERROR(StratificationImpossible);
UAVIDS_DEFINE_ERROR(MissingClass);
UAVIDS_DEFINE_ERROR(EmptyNode);
UAVIDS_DEFINE_ERROR(InvalidLabel);
UAVIDS_DEFINE_ERROR(InvalidProbabilities);
UAVIDS_DEFINE_ERROR(InvalidError);
UAVIDS_DEFINE_ERROR(ModelLacksCover);
UAVIDS_DEFINE_ERROR(TooManyFeatures);
UAVIDS_DEFINE_ERROR(SurrogateFailed);
UAVIDS_DEFINE_ERROR(NothingLeft);
UAVIDS_DEFINE_ERROR(UnsupportedModelVersion);
UAVIDS_DEFINE_ERROR(DecodeError);

#undef UAVIDS_DEFINE_ERROR

}  // namespace uavids
