from typing import List

from errors import TransientLLMError
from llmcore.base import BaseLLMRestClient


class EmbeddingsClient(BaseLLMRestClient):
    """
    HTTP wrapper for an embeddings endpoint.
    """

    def __init__(self, endpoint: str, api_key_env: str, model: str, **kwargs):
        super().__init__(endpoint, api_key_env, **kwargs)
        self.model = model

    def embed(self, text: str) -> List[float]:
        data = self._post("/v1/embeddings", {"model": self.model, "input": text})
        try:
            return list(data["data"][0]["embedding"])
        except (KeyError, IndexError, TypeError) as e:
            raise TransientLLMError(f"unexpected embedding payload: {e}") from e
