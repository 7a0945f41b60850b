import math

import pandera.pandas as pa
from pandera.typing import Series

OUTCOMES = ["Running", "Success", "Collision", "Fall", "Timeout"]
TERMINAL = ["Success", "Collision", "Fall", "Timeout"]


class TrajectoryContract(pa.DataFrameModel):
    trial: Series[int] = pa.Field(ge=0)
    seed: Series[int] = pa.Field(ge=0)
    t: Series[int] = pa.Field(ge=0)
    x: Series[float]
    y: Series[float]
    heading: Series[float] = pa.Field(gt=-math.pi, le=math.pi)
    left: Series[float] = pa.Field(ge=0, le=1)
    right: Series[float] = pa.Field(ge=0, le=1)
    reward: Series[float]
    outcome: Series[str] = pa.Field(isin=OUTCOMES)

    class Config:
        strict = True
        coerce = True


class SummaryContract(pa.DataFrameModel):
    controller: Series[str]
    trials: Series[int] = pa.Field(ge=1)
    success: Series[float] = pa.Field(ge=0, le=100)
    collision: Series[float] = pa.Field(ge=0, le=100)
    fall: Series[float] = pa.Field(ge=0, le=100)
    timeout: Series[float] = pa.Field(ge=0, le=100)

    class Config:
        strict = True
        coerce = True

    @pa.dataframe_check(name="percentages_partition",
                        error="success + collision + fall + timeout deve somar 100")
    def percentages_partition(cls, df):
        total = df["success"] + df["collision"] + df["fall"] + df["timeout"]
        return (total - 100.0).abs() <= 1e-6
