#!/usr/bin/env node
// SMT-LIB v2 pipe interface backed by the z3-solver wasm build.
//
// Reads commands from stdin, executes them against a single persistent
// Z3 context, and writes responses to stdout (flushed per command), so it
// can stand in for `z3 -in` when no native binary is available.
//
// The emscripten runtime inside z3-solver hooks process.stdin for its
// tty emulation and silently consumes bytes. We take fd 0 for ourselves
// first and hand the runtime a dummy stream instead.

'use strict';

const fs = require('fs');
const { Readable } = require('stream');

const realStdin = fs.createReadStream(null, { fd: 0 });
const dummy = new Readable({ read() {} });
Object.defineProperty(process, 'stdin', { configurable: true, get: () => dummy });

// Split a buffer into complete top-level s-expressions. Understands
// ;-comments, "..." string literals and |...| quoted symbols. Returns
// [commands, rest].
function splitCommands(buf) {
  const cmds = [];
  let depth = 0;
  let start = 0;
  let i = 0;
  let state = 'top'; // top | comment | string | qsymbol
  while (i < buf.length) {
    const c = buf[i];
    if (state === 'comment') {
      if (c === '\n') state = 'top';
    } else if (state === 'string') {
      if (c === '"') state = 'top';
    } else if (state === 'qsymbol') {
      if (c === '|') state = 'top';
    } else {
      if (c === ';') state = 'comment';
      else if (c === '"') state = 'string';
      else if (c === '|') state = 'qsymbol';
      else if (c === '(') depth += 1;
      else if (c === ')') {
        depth -= 1;
        if (depth === 0) {
          cmds.push(buf.slice(start, i + 1));
          start = i + 1;
        }
        if (depth < 0) { depth = 0; start = i + 1; }
      }
    }
    i += 1;
  }
  return [cmds, buf.slice(start)];
}

let pending = '';
const ready = [];
let eof = false;
let wake = null;

realStdin.setEncoding('utf8');
realStdin.on('data', (chunk) => {
  pending += chunk;
  const [cmds, rest] = splitCommands(pending);
  pending = rest;
  ready.push(...cmds);
  if (wake) { const w = wake; wake = null; w(); }
});
realStdin.on('end', () => {
  eof = true;
  if (wake) { const w = wake; wake = null; w(); }
});
realStdin.on('error', () => {
  eof = true;
  if (wake) { const w = wake; wake = null; w(); }
});

function nextCommand() {
  return new Promise((resolve) => {
    const poll = () => {
      if (ready.length > 0) resolve(ready.shift());
      else if (eof) resolve(null);
      else wake = poll;
    };
    poll();
  });
}

async function main() {
  const { init } = require('z3-solver');
  const { Z3 } = await init();
  const cfg = Z3.mk_config();
  const ctx = Z3.mk_context(cfg);

  for (;;) {
    const cmd = await nextCommand();
    if (cmd === null) break;
    const trimmed = cmd.trim();
    if (trimmed === '') continue;
    if (trimmed === '(exit)') break;
    let out;
    try {
      out = await Z3.eval_smtlib2_string(ctx, cmd);
    } catch (e) {
      out = `(error "${String(e).replace(/"/g, "'")}")\n`;
    }
    if (out && out.length > 0) {
      process.stdout.write(out.endsWith('\n') ? out : out + '\n');
    }
  }
  process.exit(0);
}

main().catch((e) => {
  process.stderr.write(`z3-smt2: ${e}\n`);
  process.exit(3);
});
