// Minimal ambient typing for the optional transformer backend, so the
// package builds even where the native onnxruntime download is unavailable.
declare module "@huggingface/transformers" {
  export function pipeline(task: string, model?: string): Promise<unknown>;
}
