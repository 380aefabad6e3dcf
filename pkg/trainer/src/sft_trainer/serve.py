"""Recipe for serving the tuned linking model to the pipeline."""

SERVE_RECIPE = """\
Serving the tuned linking model

The pipeline talks to any server exposing POST <base_url>/chat/completions
(OpenAI-compatible JSON). Two common ways to put the adapter behind that
interface:

1. vLLM with a live adapter:

     vllm serve <base-model-id> \\
         --enable-lora \\
         --lora-modules linker=<checkpoint-dir> \\
         --port 8000

   then point the linking slot of the run configuration at it:

     {
       "endpoints": {
         "linker": {"base_url": "http://localhost:8000/v1", "model_id": "linker"}
       },
       "routing": {"linking": "linker", "admin": "...", "generation": "...",
                   "debugging": "..."}
     }

2. Merge the adapter into the base weights (W' = W + alpha/rank * B A per
   adapted projection) and serve the merged model with any OpenAI-compatible
   server (vllm serve <merged-dir>, llama.cpp's server, TGI, ...).

Smoke check: run the pipeline's `link` command against the server on a few
questions; parsed table names should come back non-empty. Keep the request
temperature at 0; inference diversity comes from candidate-order shuffling.
"""


def serve_hint() -> str:
    """The documented serving recipe, as text."""
    return SERVE_RECIPE
