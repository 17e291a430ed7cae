import type {
  ApiSnapshot,
  CommandResultDto,
  DirectoryDto,
  OwnedObjectDto,
  StatusDto,
} from "./types.js";

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  token: string | null = null;

  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private headers(): Record<string, string> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    return headers;
  }

  async login(principal: string): Promise<string> {
    const response = await this.fetchFn(`${this.baseUrl}/v1/session`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ principal }),
    });
    if (!response.ok) throw new Error(`login failed (${response.status})`);
    const body = await response.json();
    this.token = body.token;
    return body.token;
  }

  private async getJson<T>(path: string): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, { headers: this.headers() });
    if (!response.ok) throw new Error(`${path} failed (${response.status})`);
    return (await response.json()) as T;
  }

  async objects(): Promise<OwnedObjectDto[]> {
    return (await this.getJson<{ objects: OwnedObjectDto[] }>("/v1/objects")).objects;
  }

  async directories(): Promise<DirectoryDto[]> {
    return (await this.getJson<{ directories: DirectoryDto[] }>("/v1/directories")).directories;
  }

  async status(): Promise<StatusDto> {
    return this.getJson<StatusDto>("/v1/status");
  }

  async snapshot(): Promise<ApiSnapshot> {
    const [objects, directories, status] = await Promise.all([
      this.objects(),
      this.directories(),
      this.status(),
    ]);
    return { objects, directories, status };
  }

  /** POST /v1/commands; domain failures come back as a result, not a throw. */
  async postCommand(verb: string, commandArguments: Record<string, unknown>): Promise<CommandResultDto> {
    const response = await this.fetchFn(`${this.baseUrl}/v1/commands`, {
      method: "POST",
      headers: this.headers(),
      body: JSON.stringify({ verb, arguments: commandArguments }),
    });
    return (await response.json()) as CommandResultDto;
  }

  eventsUrl(sinceSeq: number): string {
    const token = this.token ? `&token=${encodeURIComponent(this.token)}` : "";
    return `${this.baseUrl}/v1/events?since=${sinceSeq}${token}`;
  }
}
