import pandera.pandas as pa
from pandera.typing import Series

OUTCOMES = ["Success", "Collision", "Fall", "Timeout"]


class TrainLogContract(pa.DataFrameModel):
    update_index: Series[int] = pa.Field(ge=1, unique=True)
    timesteps: Series[int] = pa.Field(ge=0)
    episodes: Series[int] = pa.Field(ge=0)
    mean_ep_reward: Series[float]
    success: Series[int] = pa.Field(ge=0)
    collision: Series[int] = pa.Field(ge=0)
    fall: Series[int] = pa.Field(ge=0)
    timeout: Series[int] = pa.Field(ge=0)
    policy_loss: Series[float]
    value_loss: Series[float] = pa.Field(ge=0)
    entropy: Series[float]
    clip_fraction: Series[float] = pa.Field(ge=0, le=1)
    wallclock_s: Series[float] = pa.Field(ge=0)

    class Config:
        strict = True
        coerce = True

    @pa.dataframe_check(name="outcomes_match_episodes",
                        error="A soma dos desfechos deve ser igual ao número de episódios da atualização")
    def outcomes_match_episodes(cls, df):
        return (df["success"] + df["collision"] + df["fall"] + df["timeout"]) == df["episodes"]


class EpisodeContract(pa.DataFrameModel):
    episode: Series[int] = pa.Field(ge=0, unique=True)
    env: Series[int] = pa.Field(ge=0)
    seed: Series[int] = pa.Field(ge=0)
    reward: Series[float]
    outcome: Series[str] = pa.Field(isin=OUTCOMES)
    steps: Series[int] = pa.Field(ge=1)

    class Config:
        strict = True
        coerce = True


class RewardCurveContract(pa.DataFrameModel):
    episode: Series[int] = pa.Field(ge=0)
    reward: Series[float]
    smoothed: Series[float]

    class Config:
        strict = True
        coerce = True
