from typing import Optional

from errors import TransientLLMError
from llmcore.base import BaseLLMRestClient


class ChatCompletionClient(BaseLLMRestClient):
    """
    HTTP wrapper for a chat-completions endpoint.
    """

    def __init__(self, endpoint: str, api_key_env: str, model: str, **kwargs):
        super().__init__(endpoint, api_key_env, **kwargs)
        self.model = model

    def complete(
        self,
        system: str,
        prompt: str,
        temperature: float = 0.0,
        max_tokens: Optional[int] = None
    ) -> str:
        """
        Return the first choice's message content.
        """
        payload = {
            "model": self.model,
            "temperature": temperature,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": prompt},
            ],
        }
        if max_tokens is not None:
            payload["max_tokens"] = max_tokens

        data = self._post("/v1/chat/completions", payload)
        try:
            return data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as e:
            # malformed body from a proxy or overloaded backend
            raise TransientLLMError(f"unexpected completion payload: {e}") from e
