/* tslint:disable */
/* eslint-disable */

/**
 * Parses a model answer against a built-in taxonomy, or against
 * `custom_labels` (one per line) when that is non-empty.
 */
export function parse_prediction(raw_text: string, taxonomy_name: string, custom_labels: string): string;

/**
 * Stratified sampling over a synthetic id pool.
 */
export function sample_preview(class_sizes: string, fraction: number, seed: bigint): string;

/**
 * Instruction sensitivity of an accuracy matrix given as text.
 */
export function sensitivity_of(text: string, sample_std: boolean): string;

/**
 * Names of the built-in taxonomies with their labels.
 */
export function taxonomies(): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly parse_prediction: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
    readonly sample_preview: (a: number, b: number, c: number, d: bigint) => [number, number];
    readonly sensitivity_of: (a: number, b: number, c: number) => [number, number];
    readonly taxonomies: () => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
